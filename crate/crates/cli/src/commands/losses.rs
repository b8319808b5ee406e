use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use sceneseg_core::audio::{AudioBuffer, DEFAULT_SAMPLE_RATE};
use sceneseg_core::losses::{
    arcface_loss, energy_hinge_loss, energy_score, kl_uniform_loss, masked_snr_loss, sa_sdr_loss, sc_stage_loss,
    si_snr_loss, uss_loss, EmbeddingGeometry, LossValue, ProbVector, ScStage, ARCFACE_MARGIN, ARCFACE_SCALE,
    ENERGY_MARGIN_IN, ENERGY_MARGIN_OUT, ENERGY_WEIGHT, USS_AUX_WEIGHT,
};
use sceneseg_core::{ClassId, LogitVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{provenance, Global};

#[derive(Args, Debug, Clone)]
pub struct LossesArgs {
    /// JSON case object, or an array of them, each tagged by `"loss"`.
    #[arg(long)]
    pub case: PathBuf,
    /// Also write the results here (with `run.json` beside it); they are
    /// always printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossCase {
    SaSdr {
        refs: Vec<Vec<f64>>,
        ests: Vec<Vec<f64>>,
    },
    SiSnr {
        reference: Vec<f64>,
        estimate: Vec<f64>,
    },
    MaskedSnr {
        refs: Vec<Vec<f64>>,
        ests: Vec<Vec<f64>>,
        active: Vec<bool>,
    },
    KlUniform {
        p: Vec<f64>,
    },
    Arcface {
        feature: Vec<f64>,
        centers: Vec<Vec<f64>>,
        label: usize,
        scale: Option<f64>,
        margin: Option<f64>,
    },
    EnergyScore {
        logits: Vec<f64>,
    },
    EnergyHinge {
        #[serde(rename = "in")]
        in_scores: Vec<f64>,
        #[serde(rename = "out")]
        out_scores: Vec<f64>,
        m_in: Option<f64>,
        m_out: Option<f64>,
    },
    Uss {
        foreground: f64,
        interference: f64,
        noise: f64,
        weight: Option<f64>,
    },
    ScStage {
        arcface: f64,
        kl: f64,
        energy: f64,
        stage: u8,
        weight: Option<f64>,
    },
}

#[derive(Debug, Serialize)]
pub struct LossOutput {
    pub loss: &'static str,
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CaseFile {
    Many(Vec<LossCase>),
    One(LossCase),
}

fn mono(x: Vec<f64>) -> Result<AudioBuffer> {
    Ok(AudioBuffer::mono(x, DEFAULT_SAMPLE_RATE)?)
}

fn monos(xs: Vec<Vec<f64>>) -> Result<Vec<AudioBuffer>> {
    xs.into_iter().map(mono).collect()
}

pub fn evaluate(case: LossCase) -> Result<LossOutput> {
    let with = |loss, v: LossValue| LossOutput {
        loss,
        value: v.value,
        gradient: v.gradient,
    };
    let scalar = |loss, value| LossOutput {
        loss,
        value,
        gradient: None,
    };
    Ok(match case {
        LossCase::SaSdr { refs, ests } => with("sa_sdr", sa_sdr_loss(&monos(refs)?, &monos(ests)?)?),
        LossCase::SiSnr { reference, estimate } => with("si_snr", si_snr_loss(&mono(reference)?, &mono(estimate)?)?),
        LossCase::MaskedSnr { refs, ests, active } => {
            with("masked_snr", masked_snr_loss(&monos(refs)?, &monos(ests)?, &active)?)
        }
        LossCase::KlUniform { p } => with("kl_uniform", kl_uniform_loss(&ProbVector::new(p)?)),
        LossCase::Arcface {
            feature,
            centers,
            label,
            scale,
            margin,
        } => with(
            "arcface",
            arcface_loss(
                &EmbeddingGeometry::new(feature, centers)?,
                ClassId(label),
                scale.unwrap_or(ARCFACE_SCALE),
                margin.unwrap_or(ARCFACE_MARGIN),
            )?,
        ),
        LossCase::EnergyScore { logits } => scalar("energy_score", energy_score(&LogitVector::new(logits)?)),
        LossCase::EnergyHinge {
            in_scores,
            out_scores,
            m_in,
            m_out,
        } => with(
            "energy_hinge",
            energy_hinge_loss(
                &in_scores,
                &out_scores,
                m_in.unwrap_or(ENERGY_MARGIN_IN),
                m_out.unwrap_or(ENERGY_MARGIN_OUT),
            )?,
        ),
        LossCase::Uss {
            foreground,
            interference,
            noise,
            weight,
        } => scalar(
            "uss",
            uss_loss(foreground, interference, noise, weight.unwrap_or(USS_AUX_WEIGHT))?,
        ),
        LossCase::ScStage {
            arcface,
            kl,
            energy,
            stage,
            weight,
        } => scalar(
            "sc_stage",
            sc_stage_loss(
                arcface,
                kl,
                energy,
                ScStage::try_from(stage)?,
                weight.unwrap_or(ENERGY_WEIGHT),
            )?,
        ),
    })
}

pub fn run(global: &Global, args: LossesArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.case).with_context(|| format!("reading {}", args.case.display()))?;
    let parsed: CaseFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.case.display()))?;
    let single = matches!(parsed, CaseFile::One(_));
    let cases = match parsed {
        CaseFile::Many(v) => v,
        CaseFile::One(c) => vec![c],
    };
    let results = cases
        .into_iter()
        .enumerate()
        .map(|(i, c)| evaluate(c).with_context(|| format!("case {i}")))
        .collect::<Result<Vec<_>>>()?;
    let value = if single {
        serde_json::to_value(&results[0])?
    } else {
        serde_json::to_value(&results)?
    };
    let text = serde_json::to_string(&value)?;
    println!("{text}");
    if let Some(out) = &args.out {
        let out = provenance::resolve(out)?;
        sceneseg_core::io::write_atomic(&out, format!("{text}\n").as_bytes())?;
        let case = provenance::resolve(&args.case)?;
        let dir = out.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        provenance::write(&dir, global, "losses", json!({ "case": case, "out": out }))?;
    }
    Ok(())
}
