pub mod adversary;
pub mod dispatch;
pub mod error;
pub mod instance;
pub mod master;
pub mod milp;
pub mod netmodel;
pub mod planner;
pub mod report;
pub mod uncertainty;

pub use adversary::{solve_worst_case, AdversaryResult, BigMLedger};
pub use dispatch::{solve_dispatch, worst_case_bruteforce, DispatchDuals, DispatchResult, Topology};
pub use error::{Error, Result};
pub use instance::{parse_instance, parse_instance_str, Instance};
pub use master::{solve_master, CutSet, ExpansionPlan, MasterLayout, ModelStats, MEUR};
pub use milp::{SolveOptions, SolveStatus};
pub use netmodel::{
    discount_factor, parse_network, Bus, BusId, Demand, DemandId, GenId, Generator, Horizon, Line, LineId,
    LineStatus, Network,
};
pub use planner::{
    evaluate_plan, plan, plan_dynamic, plan_sequential, plan_static, ConvergenceTrace, IterationRecord, Mode,
    PlanResult, PlannerConfig,
};
pub use uncertainty::{
    enumerate_choices, evolve, realize, GrowthRule, Realization, RealizationChoice, UncertaintySetPeriod,
};
pub use report::{emit_series, parse_series, render_plan, render_trace, write_run, RunReport};
