//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use eigensep_core::metrics::GsConfig;
use eigensep_core::numap::NumapConfig;
use eigensep_core::{Error, LaplacianKind, Result, TrainConfig};

/// Every tunable of a run. Spectral-network keys are unprefixed; the
/// embedding network of the UMAP pipeline uses `numap_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub gs: GsConfig,
    pub knn_eval: usize,
    pub numap: NumapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            gs: GsConfig::default(),
            knn_eval: 5,
            numap: NumapConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "k",
    "batch_size",
    "k_nn",
    "lr",
    "hidden",
    "val_frac",
    "lr_divisor",
    "min_lr",
    "plateau_tolerance",
    "max_epochs",
    "loss_laplacian",
    "separation_laplacian",
    "separation_batches",
    "seed",
    "gs_t_vecs",
    "gs_neighbors",
    "knn_eval",
    "numap_se_k",
    "numap_ell",
    "numap_n_neighbors",
    "numap_neg_samples",
    "numap_a",
    "numap_b",
    "numap_hidden",
    "numap_lr",
    "numap_epochs",
    "numap_residual",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let u = &mut self.numap;
        match key {
            "k" => t.k = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "k_nn" => t.k_nn = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "hidden" => t.hidden = parse_list(key, value)?,
            "val_frac" => t.val_frac = parse(key, value)?,
            "lr_divisor" => t.lr_divisor = parse(key, value)?,
            "min_lr" => t.min_lr = parse(key, value)?,
            "plateau_tolerance" => t.plateau_tolerance = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "loss_laplacian" => t.loss_laplacian = LaplacianKind::from_str(value)?,
            "separation_laplacian" => t.separation_laplacian = LaplacianKind::from_str(value)?,
            "separation_batches" => {
                t.separation_batches = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "seed" => t.seed = parse(key, value)?,
            "gs_t_vecs" => self.gs.t_vecs = parse(key, value)?,
            "gs_neighbors" => self.gs.gs_neighbors = parse(key, value)?,
            "knn_eval" => self.knn_eval = parse(key, value)?,
            "numap_se_k" => u.se.k = parse(key, value)?,
            "numap_ell" => u.ell = parse(key, value)?,
            "numap_n_neighbors" => u.n_neighbors = parse(key, value)?,
            "numap_neg_samples" => u.neg_samples = parse(key, value)?,
            "numap_a" => u.kernel.a = parse(key, value)?,
            "numap_b" => u.kernel.b = parse(key, value)?,
            "numap_hidden" => u.hidden = parse_list(key, value)?,
            "numap_lr" => u.lr = parse(key, value)?,
            "numap_epochs" => u.epochs = parse(key, value)?,
            "numap_residual" => u.residual = parse(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn assign(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got {pair:?}")))?;
        self.set(key.trim(), value.trim())
    }

    /// Parses a config file: one `key = value` per line, `#` starts a
    /// comment, blank lines are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::InvalidArgument(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(
        file: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            cfg.apply_text(&text)?;
        }
        for pair in overrides {
            cfg.assign(pair)?;
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        cfg.sync();
        Ok(cfg)
    }

    /// Propagates shared settings into the embedding pipeline: the spectral
    /// stage inherits every network setting except its dimension.
    pub fn sync(&mut self) {
        let se_k = self.numap.se.k;
        self.numap.se = TrainConfig {
            k: se_k,
            ..self.train.clone()
        };
        self.numap.seed = self.train.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.gs.t_vecs < 2 || self.gs.gs_neighbors == 0 || self.knn_eval == 0 {
            return Err(Error::InvalidArgument(
                "gs_t_vecs must be at least 2, gs_neighbors and knn_eval positive".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn pairs(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        let u = &self.numap;
        let values: Vec<String> = vec![
            t.k.to_string(),
            t.batch_size.to_string(),
            t.k_nn.to_string(),
            t.lr.to_string(),
            join(&t.hidden),
            t.val_frac.to_string(),
            t.lr_divisor.to_string(),
            t.min_lr.to_string(),
            t.plateau_tolerance.to_string(),
            t.max_epochs.to_string(),
            t.loss_laplacian.to_string(),
            t.separation_laplacian.to_string(),
            t.separation_batches.map_or("auto".into(), |b| b.to_string()),
            t.seed.to_string(),
            self.gs.t_vecs.to_string(),
            self.gs.gs_neighbors.to_string(),
            self.knn_eval.to_string(),
            u.se.k.to_string(),
            u.ell.to_string(),
            u.n_neighbors.to_string(),
            u.neg_samples.to_string(),
            u.kernel.a.to_string(),
            u.kernel.b.to_string(),
            join(&u.hidden),
            u.lr.to_string(),
            u.epochs.to_string(),
            u.residual.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.train.batch_size, 2048);
        assert_eq!(c.train.k_nn, 20);
        assert_eq!(c.train.lr, 1e-2);
        assert_eq!(c.numap.n_neighbors, 10);
    }

    #[test]
    fn file_and_overrides_apply_in_order() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nk = 4\n\nhidden = 32, 16  # trailing\nseparation_laplacian=unnormalized\n")
            .unwrap();
        c.assign("k=3").unwrap();
        assert_eq!(c.train.k, 3);
        assert_eq!(c.train.hidden, vec![32, 16]);
        assert_eq!(c.train.separation_laplacian, LaplacianKind::Unnormalized);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.assign("learning_rate=0.1").is_err());
        assert!(c.assign("k=two").is_err());
        assert!(c.assign("no equals sign").is_err());
        let err = c.apply_text("k = 2\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn pairs_round_trip_through_assign() {
        let mut c = RunConfig::default();
        c.assign("separation_batches=3").unwrap();
        c.assign("numap_hidden=8,8").unwrap();
        let mut back = RunConfig::default();
        for (k, v) in c.pairs() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, c);
        assert_eq!(c.pairs().len(), KEYS.len());
    }

    #[test]
    fn spectral_stage_of_the_embedding_pipeline_inherits_settings() {
        let c = RunConfig::load(None, &["batch_size=256".into(), "numap_se_k=6".into()], Some(9)).unwrap();
        assert_eq!(c.numap.se.batch_size, 256);
        assert_eq!(c.numap.se.k, 6);
        assert_eq!(c.numap.se.seed, 9);
        assert_eq!(c.numap.seed, 9);
    }
}
