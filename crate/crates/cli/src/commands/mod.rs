pub mod eval;
pub mod gradcheck;
pub mod oracle;
pub mod register;
