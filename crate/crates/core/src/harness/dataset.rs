use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{augment_class, extract_graph, read_graph, EntropyGraph, GRAPH_MAGIC};

#[derive(Debug, Clone)]
pub struct Sample {
    /// `<class>/<file name>` relative to the dataset root.
    pub id: String,
    pub class: usize,
    pub graph: EntropyGraph,
}

/// Class names and, per class, the indices of its samples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTable {
    pub names: Vec<String>,
    pub members: Vec<Vec<usize>>,
}

impl ClassTable {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Group sample indices by class id.
    pub fn from_labels(names: Vec<String>, labels: &[usize]) -> Self {
        let mut members = vec![Vec::new(); names.len()];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        Self { names, members }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub classes: ClassTable,
    pub samples: Vec<Sample>,
}

/// Class-level base/novel assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    pub base: Vec<usize>,
    pub novel: Vec<usize>,
}

/// First half of the classes (lexicographic, or shuffled by `split_seed`)
/// is base, the rest novel. Odd counts give the extra class to base.
pub fn split_classes(class_count: usize, split_seed: Option<u64>) -> ClassSplit {
    let mut order: Vec<usize> = (0..class_count).collect();
    if let Some(seed) = split_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let cut = class_count.div_ceil(2);
    let mut base = order[..cut].to_vec();
    let mut novel = order[cut..].to_vec();
    base.sort_unstable();
    novel.sort_unstable();
    ClassSplit { base, novel }
}

impl Dataset {
    pub fn from_samples(names: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.class >= names.len()) {
            return Err(Error::arg(format!("sample {} has unknown class {}", s.id, s.class)));
        }
        let labels: Vec<usize> = samples.iter().map(|s| s.class).collect();
        Ok(Self {
            classes: ClassTable::from_labels(names, &labels),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.names.iter().position(|n| n == name)
    }

    /// Keep only `classes`, renumbered in the given order.
    pub fn subset(&self, classes: &[usize]) -> Dataset {
        let names = classes.iter().map(|&c| self.classes.names[c].clone()).collect();
        let mut samples = Vec::new();
        for (new_id, &c) in classes.iter().enumerate() {
            for &i in &self.classes.members[c] {
                samples.push(Sample {
                    class: new_id,
                    ..self.samples[i].clone()
                });
            }
        }
        Dataset::from_samples(names, samples).expect("subset classes are in range")
    }

    pub fn split(&self, split_seed: Option<u64>) -> (Dataset, Dataset) {
        let s = split_classes(self.class_count(), split_seed);
        (self.subset(&s.base), self.subset(&s.novel))
    }

    /// Augment classes below `augment_min` and normalize every graph that is
    /// not normalized yet.
    pub fn prepare(self, augment_min: Option<usize>, mean: f64, std: f64, seed: u64) -> Result<Dataset> {
        let names = self.classes.names.clone();
        let mut by_class: Vec<Vec<Sample>> = vec![Vec::new(); names.len()];
        for s in self.samples {
            by_class[s.class].push(s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for (class, members) in by_class.into_iter().enumerate() {
            let members = match augment_min {
                Some(floor) if !members.is_empty() && members.len() < floor => {
                    let before = members.len();
                    let ids: Vec<String> = members.iter().map(|s| s.id.clone()).collect();
                    let graphs = members.into_iter().map(|s| s.graph).collect();
                    let grown = augment_class(graphs, floor, &mut rng)?;
                    info!(
                        "augmented class {} from {before} to {} samples",
                        names[class],
                        grown.len()
                    );
                    grown
                        .into_iter()
                        .enumerate()
                        .map(|(i, graph)| Sample {
                            id: if i < before {
                                ids[i].clone()
                            } else {
                                format!("{}#aug{i}", ids[i % before])
                            },
                            class,
                            graph,
                        })
                        .collect()
                }
                _ => members,
            };
            for mut s in members {
                if !s.graph.normalized {
                    s.graph = s.graph.normalize(mean, std)?;
                }
                samples.push(s);
            }
        }
        Dataset::from_samples(names, samples)
    }
}

/// Read one sample file: stored `ENTG` graphs are loaded as-is, anything
/// else is treated as a raw binary.
pub fn load_sample_file(path: &Path, segment_len: usize, id: &str) -> Result<EntropyGraph> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut graph = if bytes.starts_with(GRAPH_MAGIC) {
        read_graph(bytes.as_slice())?
    } else {
        extract_graph(&bytes, segment_len, id)?
    };
    graph.provenance = id.to_string();
    Ok(graph)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Load `<root>/<class_name>/<sample files>` in lexicographic order.
pub fn load_dataset(root: &Path, segment_len: usize) -> Result<Dataset> {
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no class directories under dataset root"),
        ));
    }
    let mut names = Vec::new();
    let mut samples = Vec::new();
    for dir in class_dirs {
        let name = file_name(&dir);
        let class = names.len();
        let before = samples.len();
        for path in sorted_entries(&dir)?.into_iter().filter(|p| p.is_file()) {
            let id = format!("{name}/{}", file_name(&path));
            match load_sample_file(&path, segment_len, &id) {
                Ok(graph) => samples.push(Sample { id, class, graph }),
                Err(e) => warn!("skipping {}: {e}", path.display()),
            }
        }
        let count = samples.len() - before;
        if count == 0 {
            warn!("class directory {} has no usable samples; omitted", dir.display());
            continue;
        }
        info!("class {name}: {count} samples");
        names.push(name);
    }
    if names.is_empty() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no readable samples under dataset root"),
        ));
    }
    Dataset::from_samples(names, samples)
}
