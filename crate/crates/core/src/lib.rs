pub mod bench;
pub mod cli;
pub mod expr;
pub mod gp;
pub mod kaizen;
pub mod rvm;
