pub mod abstract_machine;
pub mod analysis;
pub mod concrete;
pub mod corpus;
pub mod dsg;
pub mod export;
pub mod gc;
pub mod pushdown;
pub mod shared;
pub mod syntax;
