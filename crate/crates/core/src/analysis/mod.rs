pub mod clt;
pub mod formulas;
pub mod network;
pub mod trap_chain;
pub mod traps;
