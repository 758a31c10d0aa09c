//! Bundled example scenarios.

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Spatial,
    Dynamic,
    Cce,
}

impl Demo {
    pub const ALL: [Demo; 3] = [Demo::Spatial, Demo::Dynamic, Demo::Cce];

    pub fn source(self) -> &'static str {
        match self {
            Demo::Spatial => include_str!("../scenarios/spatial.json"),
            Demo::Dynamic => include_str!("../scenarios/dynamic.json"),
            Demo::Cce => include_str!("../scenarios/cce.json"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Demo::Spatial => "spatial",
            Demo::Dynamic => "dynamic",
            Demo::Cce => "cce",
        }
    }
}
