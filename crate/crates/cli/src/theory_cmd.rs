use std::process::ExitCode;

use clap::{Args, ValueEnum};
use mchtp::theory;
use mchtp::SignalKind;
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Quantity {
    /// Contraction factor ρ(δ).
    Rho,
    /// Amplification factor γ(δ).
    Gamma,
    DeltaBound,
    EpsilonBound,
    /// Threshold ceiling for a flat, linear or decaying profile.
    EpsilonStructured,
    T1Pmf,
    T2Bound,
    T3Pmf,
    WaitingTime,
    /// Brute-force δ_s of a seeded Gaussian matrix.
    Ric,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[arg(value_enum)]
    quantity: Quantity,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kbar: Option<usize>,
    #[arg(long)]
    t: Option<u64>,
    /// Magnitude ratio x_max/x_min.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    x_norm: Option<f64>,
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    /// flat, linear, or decaying
    #[arg(long)]
    structure: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// RIC order.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn need<T: Copy>(v: Option<T>, name: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| mchtp::Error::Config(format!("missing --{name}")).into())
}

fn evaluate(a: &TheoryArgs) -> anyhow::Result<Value> {
    Ok(match a.quantity {
        Quantity::Rho => json!(theory::rho_gamma(need(a.delta, "delta")?)?.0),
        Quantity::Gamma => json!(theory::rho_gamma(need(a.delta, "delta")?)?.1),
        Quantity::DeltaBound => json!(theory::delta_bound(need(a.k, "k")?, need(a.r, "r")?)?),
        Quantity::EpsilonBound => json!(theory::epsilon_bound(
            need(a.delta, "delta")?,
            need(a.k, "k")?,
            need(a.x_min, "x-min")?,
            need(a.x_max, "x-max")?
        )?),
        Quantity::EpsilonStructured => {
            let kind = match a.structure.as_deref() {
                Some("flat") => SignalKind::Flat,
                Some("linear") => SignalKind::Linear,
                Some("decaying") => SignalKind::Decaying {
                    alpha: need(a.alpha, "alpha")?,
                },
                other => {
                    return Err(mchtp::Error::Config(format!(
                        "--structure must be flat, linear or decaying, got {other:?}"
                    ))
                    .into())
                }
            };
            json!(theory::epsilon_bound_structured(
                kind,
                need(a.delta, "delta")?,
                need(a.k, "k")?,
                need(a.x_norm, "x-norm")?
            )?)
        }
        Quantity::T1Pmf => json!(theory::t1_pmf(need(a.t, "t")?, need(a.k, "k")?, need(a.kbar, "kbar")?)?),
        Quantity::T3Pmf => json!(theory::t3_pmf(need(a.t, "t")?, need(a.kbar, "kbar")?)?),
        Quantity::T2Bound => json!(theory::t2_upper_bound(
            need(a.eps, "eps")?,
            need(a.delta, "delta")?,
            need(a.x_norm, "x-norm")?
        )?),
        Quantity::WaitingTime => serde_json::to_value(theory::expected_waiting_time(
            need(a.k, "k")?,
            need(a.kbar, "kbar")?,
            need(a.eps, "eps")?,
            need(a.delta, "delta")?,
            need(a.x_norm, "x-norm")?,
        )?)?,
        Quantity::Ric => {
            let phi = mchtp::gen_gaussian_matrix(need(a.m, "m")?, need(a.n, "n")?, a.seed)?;
            json!(theory::ric_bruteforce(&phi, need(a.s, "s")?)?)
        }
    })
}

pub fn run(a: &TheoryArgs) -> anyhow::Result<ExitCode> {
    let value = evaluate(a)?;
    let name = a.quantity.to_possible_value().expect("no skipped variants").get_name().to_string();
    println!("{}", json!({ "quantity": name, "value": value }));
    Ok(ExitCode::SUCCESS)
}
