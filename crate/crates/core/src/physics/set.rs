//! Channel-set files.
//!
//! A `channels` container with meta `{kind, n_t, n_i, users, seed, config_hash,
//! count}`. Ideal sets store `h_rt`, `h_ri`, `h_it` per realization under the prefix
//! `r{index}.`; coupled sets store a shared `y_ii` plus `y_it`, `y_ri`, `y_rt` per
//! realization. Transformed coupled quantities are recomputed on load.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::channel::{ChannelKind, ChannelRealization, IdealChannel};
use super::coupling::CoupledChannel;
use crate::autodiff::{CMat, ComplexMatrix};
use crate::container::Container;
use crate::error::{Error, Result};

pub const CHANNELS_KIND: &str = "channels";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub kind: ChannelKind,
    pub n_t: usize,
    pub n_i: usize,
    pub users: Vec<usize>,
    pub seed: u64,
    pub config_hash: String,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub meta: ChannelMeta,
    pub realizations: Vec<ChannelRealization>,
}

impl ChannelSet {
    pub fn new(
        realizations: Vec<ChannelRealization>,
        users: Vec<usize>,
        seed: u64,
        config_hash: String,
    ) -> Result<Self> {
        let first = realizations
            .first()
            .ok_or_else(|| Error::Config("a channel set needs at least one realization".into()))?;
        let kind = first.kind();
        let (n_r, n_i, n_t) = first.dims();
        if users.iter().sum::<usize>() != n_r {
            return Err(Error::Contract("user partition does not match N_R".into()));
        }
        for r in &realizations {
            if r.kind() != kind || r.dims() != (n_r, n_i, n_t) {
                return Err(Error::Contract(
                    "channel set mixes variants or shapes".into(),
                ));
            }
        }
        Ok(Self {
            meta: ChannelMeta {
                kind,
                n_t,
                n_i,
                users,
                seed,
                config_hash,
                count: realizations.len(),
            },
            realizations,
        })
    }

    pub fn n_r(&self) -> usize {
        self.meta.users.iter().sum()
    }

    pub fn to_container(&self) -> Container {
        let meta = serde_json::to_value(&self.meta).expect("meta serializes");
        let mut c = Container::new(CHANNELS_KIND, meta);
        let mut shared_written = false;
        for (i, r) in self.realizations.iter().enumerate() {
            match r {
                ChannelRealization::Ideal(ch) => {
                    c.push_cmat(&format!("r{i}.h_rt"), &ch.h_rt.to_cmat());
                    c.push_cmat(&format!("r{i}.h_ri"), &ch.h_ri.to_cmat());
                    c.push_cmat(&format!("r{i}.h_it"), &ch.h_it.to_cmat());
                }
                ChannelRealization::Coupled(ch) => {
                    if !shared_written {
                        c.push_cmat("y_ii", &ch.y_ii);
                        shared_written = true;
                    }
                    c.push_cmat(&format!("r{i}.y_it"), &ch.y_it);
                    c.push_cmat(&format!("r{i}.y_ri"), &ch.y_ri);
                    c.push_cmat(&format!("r{i}.y_rt"), &ch.y_rt);
                }
            }
        }
        c
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        c.expect_kind(CHANNELS_KIND, path)?;
        let meta: ChannelMeta = serde_json::from_value(c.meta.clone())
            .map_err(|e| Error::format(path, format!("bad channel meta: {e}")))?;
        let get = |name: String| c.cmat(&name).map_err(|e| Error::format(path, e.to_string()));
        let mut realizations = Vec::with_capacity(meta.count);
        let shared: Option<Arc<CMat>> = match meta.kind {
            ChannelKind::Coupled => Some(Arc::new(get("y_ii".into())?)),
            ChannelKind::Ideal => None,
        };
        for i in 0..meta.count {
            let r = match &shared {
                None => ChannelRealization::Ideal(IdealChannel {
                    h_rt: ComplexMatrix::from_cmat(&get(format!("r{i}.h_rt"))?),
                    h_ri: ComplexMatrix::from_cmat(&get(format!("r{i}.h_ri"))?),
                    h_it: ComplexMatrix::from_cmat(&get(format!("r{i}.h_it"))?),
                }),
                Some(y_ii) => ChannelRealization::Coupled(CoupledChannel::new(
                    y_ii.clone(),
                    get(format!("r{i}.y_it"))?,
                    get(format!("r{i}.y_ri"))?,
                    get(format!("r{i}.y_rt"))?,
                )?),
            };
            realizations.push(r);
        }
        let set = Self::new(
            realizations,
            meta.users.clone(),
            meta.seed,
            meta.config_hash.clone(),
        )
        .map_err(|e| Error::format(path, e.to_string()))?;
        if set.meta != meta {
            return Err(Error::format(path, "channel meta disagrees with payload"));
        }
        Ok(set)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_container(&Container::read(path)?, path)
    }

    /// Long-format CSV: `realization,block,row,col,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Contract(format!("csv export failed: {e}"));
        w.write_record(["realization", "block", "row", "col", "re", "im"])
            .map_err(csv_err)?;
        for (n, r) in self.realizations.iter().enumerate() {
            let blocks: Vec<(&str, CMat)> = match r {
                ChannelRealization::Ideal(c) => vec![
                    ("h_rt", c.h_rt.to_cmat()),
                    ("h_ri", c.h_ri.to_cmat()),
                    ("h_it", c.h_it.to_cmat()),
                ],
                ChannelRealization::Coupled(c) => vec![
                    ("s_rt", c.s_rt.to_cmat()),
                    ("s_ri", c.s_ri.to_cmat()),
                    ("s_it", c.s_it.to_cmat()),
                ],
            };
            for (name, m) in blocks {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        let z = m[(i, j)];
                        w.write_record([
                            n.to_string(),
                            name.to_string(),
                            i.to_string(),
                            j.to_string(),
                            format!("{:e}", z.re),
                            format!("{:e}", z.im),
                        ])
                        .map_err(csv_err)?;
                    }
                }
            }
        }
        w.flush()
            .map_err(|e| Error::Contract(format!("csv export failed: {e}")))
    }
}
