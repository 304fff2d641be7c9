//! Configuration, file formats, the streaming pipeline and Monte Carlo
//! experiments behind the command-line tool.

pub mod config;
pub mod experiments;
pub mod io;
pub mod pipeline;

pub use config::{DetectorConfig, ManifoldParams, Mode, RunConfig, ThresholdChoice};
pub use experiments::{arl_row, delay_row, method_delay, residual_stream, ArlRow, DelayRow, MethodDelay};
pub use io::{RecordWriter, StreamReader, StreamRecord, RECORD_HEADER};
pub use pipeline::{run_stream, Pipeline, RunSummary};
