pub mod autodiff;
pub mod cli;
pub mod config;
pub mod game;
pub mod model;
pub mod statverify;
pub mod stl;
pub mod trainer;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stl(#[from] stl::StlError),
    #[error(transparent)]
    Game(#[from] game::GameError),
    #[error(transparent)]
    Tensor(#[from] autodiff::TensorError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Verify(#[from] statverify::VerifyError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error("episode {episode}: {source}")]
    Episode { episode: usize, source: Box<Error> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
