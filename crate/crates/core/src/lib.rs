pub mod engine;
pub mod eval;
pub mod experiment;
pub mod levelgen;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod seeding;
pub mod trainer;
pub mod transfer;
pub mod verify;
