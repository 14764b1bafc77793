pub mod capacity_core;
pub mod freespace_optics;
pub mod network_graph;
pub mod modular_topology;
pub mod scenario_planner;
pub mod cli;
