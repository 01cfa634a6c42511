//! Compact binary container for chain draws.
//!
//! Layout (little-endian): magic `LFGPCH01`, dims (n, T_w, q, r), master
//! seed, config hash, the window-time grid, then per-draw records of the
//! full model state. Round trips are bit-exact; the config hash is checked
//! on load so a chain can't silently be reused with edited settings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use lfgp_core::sampler::{ChainDraws, ModelState};

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"LFGPCH01";

/// Reader wrapper that tracks the byte offset for error reporting.
struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

#[derive(Debug)]
pub struct ChainFile {
    pub draws: ChainDraws,
    pub time_index: Vec<f64>,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

pub fn save_chain(
    path: &Path,
    draws: &ChainDraws,
    time_index: &[f64],
    seed: u64,
    config_hash: &[u8; 32],
) -> Result<()> {
    let first = draws
        .states
        .first()
        .ok_or_else(|| CliError::Numerical("chain holds no draws".into()))?;
    let (n, t_w, q, r) = (
        first.n_trials(),
        first.n_windows(),
        first.dim_q(),
        first.n_factors(),
    );
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for dim in [n, t_w, q, r] {
        w.write_u32::<LittleEndian>(dim as u32)?;
    }
    w.write_u64::<LittleEndian>(seed)?;
    w.write_all(config_hash)?;
    for &t in time_index {
        w.write_f64::<LittleEndian>(t)?;
    }
    w.write_u32::<LittleEndian>(draws.states.len() as u32)?;
    for (state, &lp) in draws.states.iter().zip(&draws.log_posts) {
        for i in 0..n {
            for t in 0..t_w {
                for j in 0..r {
                    w.write_f64::<LittleEndian>(state.factors[i][(t, j)])?;
                }
            }
        }
        for j in 0..r {
            for l in 0..q {
                w.write_f64::<LittleEndian>(state.loadings[(j, l)])?;
            }
        }
        w.write_f64::<LittleEndian>(state.sigma2)?;
        for j in 0..r {
            w.write_f64::<LittleEndian>(state.theta[j])?;
        }
        match &state.lambda {
            Some(lambda) => {
                w.write_u8(1)?;
                for l in 0..q {
                    w.write_f64::<LittleEndian>(lambda[l])?;
                }
            }
            None => w.write_u8(0)?,
        }
        w.write_f64::<LittleEndian>(lp)?;
    }
    for j in 0..r {
        w.write_f64::<LittleEndian>(draws.accept_rate_theta[j])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_chain(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<ChainFile> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut r = Counting {
        inner: BufReader::new(file),
        offset: 0,
    };
    let fail = |r: &Counting<BufReader<File>>, msg: &str| {
        CliError::Data(format!(
            "{}: {msg} (byte offset {})",
            path.display(),
            r.offset
        ))
    };

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| fail(&r, "truncated header"))?;
    if &magic != MAGIC {
        return Err(CliError::Data(format!(
            "{}: unrecognized chain version (magic {:?})",
            path.display(),
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = r
            .read_u32::<LittleEndian>()
            .map_err(|_| fail(&r, "truncated dims"))? as usize;
    }
    let [n, t_w, q, rk] = dims;
    let seed = r
        .read_u64::<LittleEndian>()
        .map_err(|_| fail(&r, "truncated seed"))?;
    let mut config_hash = [0u8; 32];
    r.read_exact(&mut config_hash)
        .map_err(|_| fail(&r, "truncated config hash"))?;
    if let Some(expected) = expected_hash {
        if expected != &config_hash {
            return Err(CliError::Config(format!(
                "config hash mismatch: chain was written with {}, current config is {}",
                hex::encode(config_hash),
                hex::encode(expected)
            )));
        }
    }
    let mut time_index = vec![0.0; t_w];
    for t in time_index.iter_mut() {
        *t = r
            .read_f64::<LittleEndian>()
            .map_err(|_| fail(&r, "truncated time index"))?;
    }
    let n_states = r
        .read_u32::<LittleEndian>()
        .map_err(|_| fail(&r, "truncated draw count"))? as usize;

    let mut states = Vec::with_capacity(n_states);
    let mut log_posts = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut factors = vec![DMatrix::zeros(t_w, rk); n];
        for f in factors.iter_mut() {
            for t in 0..t_w {
                for j in 0..rk {
                    f[(t, j)] = r
                        .read_f64::<LittleEndian>()
                        .map_err(|_| fail(&r, "truncated factor block"))?;
                }
            }
        }
        let mut loadings = DMatrix::zeros(rk, q);
        for j in 0..rk {
            for l in 0..q {
                loadings[(j, l)] = r
                    .read_f64::<LittleEndian>()
                    .map_err(|_| fail(&r, "truncated loading block"))?;
            }
        }
        let sigma2 = r
            .read_f64::<LittleEndian>()
            .map_err(|_| fail(&r, "truncated sigma2"))?;
        let mut theta = vec![0.0; rk];
        for th in theta.iter_mut() {
            *th = r
                .read_f64::<LittleEndian>()
                .map_err(|_| fail(&r, "truncated theta"))?;
        }
        let lambda_flag = r.read_u8().map_err(|_| fail(&r, "truncated lambda flag"))?;
        let lambda = match lambda_flag {
            0 => None,
            1 => {
                let mut lam = DVector::zeros(q);
                for l in 0..q {
                    lam[l] = r
                        .read_f64::<LittleEndian>()
                        .map_err(|_| fail(&r, "truncated lambda block"))?;
                }
                Some(lam)
            }
            other => return Err(fail(&r, &format!("bad lambda flag {other}"))),
        };
        log_posts.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| fail(&r, "truncated log posterior"))?,
        );
        states.push(ModelState {
            factors,
            loadings,
            sigma2,
            theta,
            lambda,
        });
    }
    let mut accept_rate_theta = vec![0.0; rk];
    for a in accept_rate_theta.iter_mut() {
        *a = r
            .read_f64::<LittleEndian>()
            .map_err(|_| fail(&r, "truncated acceptance rates"))?;
    }

    Ok(ChainFile {
        draws: ChainDraws {
            states,
            log_posts,
            accept_rate_theta,
        },
        time_index,
        seed,
        config_hash,
    })
}
