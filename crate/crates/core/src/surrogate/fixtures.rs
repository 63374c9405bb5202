//! Versioned fixture spaces and models shipped under `configs/`.

use super::ResourceModel;
use crate::metrics::MetricExpr;
use crate::space::Schema;

macro_rules! config {
    ($path:literal) => {
        include_str!(concat!("../../../../configs/", $path))
    };
}

pub const DUMMY_SCHEMA: &str = config!("schemas/dummy.toml");
pub const FFT_SCHEMA: &str = config!("schemas/fft-like.toml");
pub const FFT9_SCHEMA: &str = config!("schemas/fft-like-9.toml");
pub const GEMM_SCHEMA: &str = config!("schemas/gemm-like.toml");
pub const BLACKSCHOLES_SCHEMA: &str = config!("schemas/blackscholes.toml");

pub const DUMMY_ESTIM: &str = config!("models/dummy-estim.toml");
pub const DUMMY_SYNTH: &str = config!("models/dummy-synth.toml");
pub const FFT_MODEL: &str = config!("models/fft-like.toml");
pub const GEMM_MODEL: &str = config!("models/gemm-like.toml");
pub const BS_SYNTH_MODEL: &str = config!("models/bs-synth.toml");

/// Buildability constraint of the GEMM fixture.
pub const GEMM_BUILDABLE: &str = "nbCore <= matSize * matSize";

fn schema(text: &str) -> Schema {
    Schema::parse(text).expect("fixture schema")
}

fn model(text: &str) -> ResourceModel {
    ResourceModel::parse(text).expect("fixture model")
}

/// Three-parameter dummy module with its estimation and synthesis models.
pub fn dummy() -> (Schema, Vec<ResourceModel>) {
    (
        schema(DUMMY_SCHEMA),
        vec![model(DUMMY_ESTIM), model(DUMMY_SYNTH)],
    )
}

/// Seven-point streaming FFT.
pub fn fft_like() -> (Schema, ResourceModel) {
    (schema(FFT_SCHEMA), model(FFT_MODEL))
}

/// Nine-point variant of [`fft_like`].
pub fn fft_like_9() -> (Schema, ResourceModel) {
    (schema(FFT9_SCHEMA), model(FFT_MODEL))
}

/// 10 x 5 GEMM grid; [`gemm_buildable`] cuts it to 41 points.
pub fn gemm_like() -> (Schema, ResourceModel) {
    (schema(GEMM_SCHEMA), model(GEMM_MODEL))
}

pub fn gemm_buildable() -> MetricExpr {
    MetricExpr::parse(GEMM_BUILDABLE).expect("fixture predicate")
}

pub fn blackscholes_schema() -> Schema {
    schema(BLACKSCHOLES_SCHEMA)
}

pub fn bs_synth() -> ResourceModel {
    model(BS_SYNTH_MODEL)
}
