pub mod datapipe;
pub mod layers;
pub mod marketdata;
pub mod tensor;
pub mod training;
pub mod zoo;
