use super::config::TrainConfig;
use crate::model::{Adaptation, BackboneKind, Strategy};
use crate::{Error, Result};

/// Canonical name of an ablation cell, e.g. `Meta+RNN+ITF`, `RNN`, `ADA+FF`.
pub fn ablation_label(backbone: BackboneKind, adaptation: Adaptation, strategy: Strategy) -> String {
    let mut parts = Vec::with_capacity(3);
    match adaptation {
        Adaptation::Meta => parts.push("Meta"),
        Adaptation::Ada => parts.push("ADA"),
        Adaptation::GlobalHead => {}
    }
    parts.push(backbone.label());
    if strategy == Strategy::Iterated {
        parts.push("ITF");
    }
    parts.join("+")
}

/// Inverse of [`ablation_label`].
pub fn parse_ablation_label(label: &str) -> Result<(BackboneKind, Adaptation, Strategy)> {
    let bad = || Error::config("label", format!("unknown ablation label {label:?}"));
    let mut parts: Vec<&str> = label.split('+').collect();
    let adaptation = match parts.first() {
        Some(&"Meta") => {
            parts.remove(0);
            Adaptation::Meta
        }
        Some(&"ADA") => {
            parts.remove(0);
            Adaptation::Ada
        }
        _ => Adaptation::GlobalHead,
    };
    let strategy = if parts.last() == Some(&"ITF") {
        parts.pop();
        Strategy::Iterated
    } else {
        Strategy::TeacherForced
    };
    let [name] = parts[..] else { return Err(bad()) };
    let backbone = BackboneKind::ALL
        .into_iter()
        .find(|b| b.label() == name)
        .ok_or_else(bad)?;
    Ok((backbone, adaptation, strategy))
}

/// Every backbone x adaptation x strategy combination applied to `base`.
pub fn ablation_grid(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut out = Vec::with_capacity(18);
    for adaptation in Adaptation::ALL {
        for backbone in BackboneKind::ALL {
            for strategy in [Strategy::Iterated, Strategy::TeacherForced] {
                let mut cfg = base.clone();
                cfg.backbone = backbone;
                cfg.adaptation = adaptation;
                cfg.strategy = strategy;
                out.push((ablation_label(backbone, adaptation, strategy), cfg));
            }
        }
    }
    out
}
