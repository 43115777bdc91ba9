//! `--config` file: TOML or JSON, chosen by extension.
//!
//! ```toml
//! [filter]
//! mode = "mip"
//! s = 0.1
//!
//! [train]
//! iterations = 3000
//! lambda_dssim = 0.2
//!
//! [densify]
//! tau_spectral = 0.5
//!
//! [render]
//! tile_size = 16
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use serde::Deserialize;
use spectral_splat::densify::DensifyConfig;
use spectral_splat::filters::FilterMode;
use spectral_splat::render::RenderConfig;
use spectral_splat::train::TrainConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub mode: Option<String>,
    pub s: Option<f64>,
    pub s0: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub filter: FilterSection,
    pub train: TrainConfig,
    /// Absent means "derive from the scene extent".
    pub densify: Option<DensifyConfig>,
    pub render: RenderConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, path.extension().and_then(|e| e.to_str()).unwrap_or(""))
            .with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str, ext: &str) -> anyhow::Result<Self> {
        let cfg: Self = match ext {
            "toml" => toml::from_str(text)?,
            "json" => serde_json::from_str(text)?,
            other => bail!("config must be .toml or .json, got `.{other}`"),
        };
        cfg.render.validate()?;
        Ok(cfg)
    }

    /// Filter from the config file, with `flag` (a mode name) taking precedence
    /// over `filter.mode`. `None` when neither names a mode.
    pub fn filter(&self, flag: Option<&str>) -> anyhow::Result<Option<FilterMode>> {
        let Some(name) = flag.or(self.filter.mode.as_deref()) else {
            return Ok(None);
        };
        let mode: FilterMode = name.parse()?;
        let kernel = match mode {
            FilterMode::ViewConsistent { .. } => self.filter.s0,
            FilterMode::Ewa { .. } | FilterMode::Mip { .. } => self.filter.s,
            FilterMode::None => None,
        };
        Ok(Some(match kernel {
            Some(k) => mode.with_kernel(k)?,
            None => mode,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let t = FileConfig::parse(
            "[filter]\nmode = \"view-consistent\"\ns0 = 0.3\n[train]\niterations = 7\n[render]\ntile_size = 8\n",
            "toml",
        )
        .unwrap();
        let j = FileConfig::parse(
            r#"{"filter": {"mode": "view-consistent", "s0": 0.3}, "train": {"iterations": 7}, "render": {"tile_size": 8}}"#,
            "json",
        )
        .unwrap();
        assert_eq!(t.train, j.train);
        assert_eq!(t.train.iterations, 7);
        assert_eq!(t.render.tile_size, 8);
        assert_eq!(t.filter(None).unwrap(), Some(FilterMode::ViewConsistent { s0: 0.3 }));
        assert_eq!(j.filter(None).unwrap(), t.filter(None).unwrap());
    }

    #[test]
    fn flag_overrides_mode_but_keeps_kernel() {
        let c = FileConfig::parse("[filter]\nmode = \"ewa\"\ns = 0.5\n", "toml").unwrap();
        assert_eq!(c.filter(Some("mip")).unwrap(), Some(FilterMode::Mip { s: 0.5 }));
        assert_eq!(FileConfig::default().filter(None).unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_extensions() {
        assert!(FileConfig::parse("[filtre]\nmode = \"ewa\"\n", "toml").is_err());
        assert!(FileConfig::parse("{}", "yaml").is_err());
        assert!(FileConfig::parse("[render]\ntile_size = 0\n", "toml").is_err());
    }
}
