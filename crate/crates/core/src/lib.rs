pub mod fsio;
pub mod series;
pub mod sim;
pub mod var;
pub mod univariate;
pub mod eval;
pub mod cli;
