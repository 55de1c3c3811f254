//! Dataset directories: `<root>/{train,valid,test}/traj_00000.bin`.
//!
//! Trajectory seeds derive from the experiment seed and a *global* index that
//! runs across splits (train first, then valid, then test), so the three
//! splits draw from disjoint seed streams and adding trajectories to one
//! split never changes another.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::init::generate_trajectory;
use crate::sim::{SimConfig, Trajectory};

use super::config::DatasetSizes;
use super::traj::{load_trajectory, save_trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn count(self, sizes: &DatasetSizes) -> usize {
        match self {
            Split::Train => sizes.train,
            Split::Valid => sizes.valid,
            Split::Test => sizes.test,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?} (train|valid|test)"))),
        }
    }
}

pub fn split_dir(root: &Path, split: Split) -> PathBuf {
    root.join(split.dir_name())
}

pub fn traj_file_name(index: usize) -> String {
    format!("traj_{index:05}.bin")
}

/// First global trajectory index of a split.
pub fn dataset_seed_offset(sizes: &DatasetSizes, split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::Valid => sizes.train as u64,
        Split::Test => (sizes.train + sizes.valid) as u64,
    }
}

pub fn save_split(dir: &Path, trajs: &[Trajectory]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, traj) in trajs.iter().enumerate() {
        save_trajectory(dir.join(traj_file_name(i)), traj)?;
    }
    Ok(())
}

/// Loads every `traj_*.bin` in name order. An empty or absent directory is
/// an error: silently training on nothing helps nobody.
pub fn load_split(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| {
            Error::invalid(format!("cannot read dataset dir {}: {e}", dir.display()))
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "bin")
                && p.file_name()
                    .and_then(|f| f.to_str())
                    .is_some_and(|f| f.starts_with("traj_"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::invalid(format!(
            "no trajectory files in {}",
            dir.display()
        )));
    }
    names.iter().map(|p| load_trajectory(p)).collect()
}

/// Simulates and writes a full dataset. Returns the number of trajectories
/// written. Splits with a zero count get no directory.
pub fn generate_dataset(
    root: &Path,
    n_particles: usize,
    config: &SimConfig,
    sizes: &DatasetSizes,
    base_seed: u64,
) -> Result<usize> {
    let mut written = 0;
    for split in Split::ALL {
        let count = split.count(sizes);
        if count == 0 {
            continue;
        }
        let dir = split_dir(root, split);
        fs::create_dir_all(&dir)?;
        let offset = dataset_seed_offset(sizes, split);
        for i in 0..count {
            let traj = generate_trajectory(n_particles, config, base_seed, offset + i as u64)?;
            save_trajectory(dir.join(traj_file_name(i)), &traj)?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;
    use crate::sim::ForceLaw;

    fn tiny_config() -> SimConfig {
        let mut c = SimConfig::for_particle_count(3, ForceLaw::Gravity);
        c.n_base_steps = 2;
        c
    }

    #[test]
    fn generate_writes_expected_layout_with_disjoint_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let sizes = DatasetSizes { train: 2, valid: 1, test: 1 };
        let n = generate_dataset(dir.path(), 3, &tiny_config(), &sizes, 909).unwrap();
        assert_eq!(n, 4);
        assert!(dir.path().join("train/traj_00000.bin").exists());
        assert!(dir.path().join("train/traj_00001.bin").exists());
        assert!(dir.path().join("valid/traj_00000.bin").exists());
        assert!(dir.path().join("test/traj_00000.bin").exists());

        let train = load_split(&split_dir(dir.path(), Split::Train)).unwrap();
        let valid = load_split(&split_dir(dir.path(), Split::Valid)).unwrap();
        let test = load_split(&split_dir(dir.path(), Split::Test)).unwrap();
        assert_eq!(train.len(), 2);
        // Global indices 0,1 | 2 | 3 feed the per-trajectory seed derivation.
        assert_eq!(train[0].seed, derive_seed(909, 0));
        assert_eq!(train[1].seed, derive_seed(909, 1));
        assert_eq!(valid[0].seed, derive_seed(909, 2));
        assert_eq!(test[0].seed, derive_seed(909, 3));
        assert_ne!(train[0].snapshots[0].positions, train[1].snapshots[0].positions);
    }

    #[test]
    fn zero_count_split_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let sizes = DatasetSizes { train: 1, valid: 0, test: 0 };
        generate_dataset(dir.path(), 3, &tiny_config(), &sizes, 1).unwrap();
        assert!(!dir.path().join("valid").exists());
        assert!(load_split(&split_dir(dir.path(), Split::Valid)).is_err());
    }

    #[test]
    fn load_split_ignores_foreign_files_and_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let trajs: Vec<Trajectory> = (0..3)
            .map(|i| generate_trajectory(3, &config, 5, i).unwrap())
            .collect();
        save_split(dir.path(), &trajs).unwrap();
        fs::write(dir.path().join("notes.txt"), "not a trajectory").unwrap();
        let back = load_split(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&trajs) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.snapshots, b.snapshots);
        }
    }
}
