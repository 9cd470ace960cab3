use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Destination directory plus the verbosity switch.
pub struct Output {
    dir: PathBuf,
    quiet: bool,
}

impl Output {
    pub fn new(dir: PathBuf, quiet: bool) -> CliResult<Self> {
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir, quiet })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

pub const PLOT_FLOW: &str = r#"# Energy and velocity components of a magnetic geodesic.
import sys
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv")
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
for col in [c for c in df.columns if c.startswith("u")]:
    ax1.plot(df["t"], df[col], label=col)
ax1.set_ylabel("u")
ax1.legend()
ax2.plot(df["t"], (df["E"] - df["E"].iloc[0]) / max(abs(df["E"].iloc[0]), 1e-300))
ax2.set_xlabel("t")
ax2.set_ylabel("relative energy error")
fig.tight_layout()
fig.savefig("flow.png", dpi=150)
"#;

pub const PLOT_CONNECT: &str = r#"# Velocity components and minimizer energy history of a connection.
import json
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv("trajectory.csv")
report = json.load(open("report.json"))
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
for col in [c for c in df.columns if c.startswith("u")]:
    ax1.plot(df["t"], df[col], label=col)
ax1.set_xlabel("t")
ax1.legend()
ax2.semilogy(report["minimizer"]["energy_curve"])
ax2.set_xlabel("iteration")
ax2.set_ylabel("discrete Finsler energy")
fig.tight_layout()
fig.savefig("connect.png", dpi=150)
"#;

pub const PLOT_EPDIFF: &str = r#"# Energy history and spectra of the magnetic EPDiff run.
import pandas as pd
import numpy as np
import matplotlib.pyplot as plt

energy = pd.read_csv("energy.csv")
snaps = pd.read_csv("snapshots.csv")
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(energy["t"], energy["E"] - energy["E"].iloc[0])
ax1.set_xlabel("t")
ax1.set_ylabel("E - E(0)")
for t, group in snaps.groupby("t"):
    pos = group[group["k"] > 0]
    ax2.loglog(pos["k"], np.hypot(pos["re"], pos["im"]), label=f"t={t:g}")
ax2.set_xlabel("k")
ax2.set_ylabel("|c_k|")
ax2.legend(fontsize=6)
fig.tight_layout()
fig.savefig("epdiff.png", dpi=150)
"#;
