pub mod algebra;
pub mod bench;
pub mod closure;
pub mod qcn;
pub mod revision;
