//! Deterministic file emission: CSV logs, JSON summaries, checkpoint and
//! policy-library files. Identical inputs always produce byte-identical
//! files (no timestamps, fixed column orders, default float formatting).

use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::fs;
use std::path::Path;

use mmlab_core::experiment::{
    checkpoint_from_bytes, checkpoint_to_bytes, Checkpoint, MmStepRow, SessionSummary,
};
use mmlab_core::nn::FisherDiag;
use mmlab_core::replay::{ReplayBuffer, Transition};
use mmlab_core::rewards::RewardVector;
use mmlab_core::session::MarketEvent;

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_sessions_csv(path: &Path, rows: &[SessionSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "session",
        "mm_id",
        "label",
        "mean_reward",
        "mean_r2",
        "terminal_mtm",
        "terminal_cash",
        "terminal_inventory",
        "mean_abs_inventory",
        "cash_inventory_ratio",
        "total_earnings",
        "total_hedge_cost",
        "eps",
    ])?;
    for r in rows {
        w.write_record([
            r.session.to_string(),
            r.mm_id.to_string(),
            r.label.clone(),
            r.mean_reward.to_string(),
            r.mean_r2.to_string(),
            r.terminal_mtm.to_string(),
            r.terminal_cash.to_string(),
            r.terminal_inventory.to_string(),
            r.mean_abs_inventory.to_string(),
            r.cash_inventory_ratio.to_string(),
            r.total_earnings.to_string(),
            r.total_hedge_cost.to_string(),
            r.eps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mm_steps_csv(path: &Path, rows: &[MmStepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "session", "step", "mm_id", "eta_b", "eta_s", "eta_h", "buys", "sells", "inventory",
        "cash", "mtm", "e", "pnl", "hgc", "r1", "r2",
    ])?;
    for r in rows {
        w.write_record([
            r.session.to_string(),
            r.step.to_string(),
            r.mm_id.to_string(),
            r.eta_b.to_string(),
            r.eta_s.to_string(),
            r.eta_h.to_string(),
            r.buys.to_string(),
            r.sells.to_string(),
            r.inventory.to_string(),
            r.cash.to_string(),
            r.mtm.to_string(),
            r.e.to_string(),
            r.pnl.to_string(),
            r.hgc.to_string(),
            r.r1.to_string(),
            r.r2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(path: &Path, events: &[MarketEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step", "event_kind", "agent_id", "side", "qty", "price_ticks", "order_id",
    ])?;
    for e in events {
        let kind = match e.kind {
            mmlab_core::session::EventKind::LimitSubmit => "limit",
            mmlab_core::session::EventKind::MarketSubmit => "market",
            mmlab_core::session::EventKind::Fill => "fill",
            mmlab_core::session::EventKind::Cancel => "cancel",
            mmlab_core::session::EventKind::Unfilled => "unfilled",
        };
        let side = match e.side {
            mmlab_core::book::Side::Buy => "buy",
            mmlab_core::book::Side::Sell => "sell",
        };
        w.write_record([
            e.step.to_string(),
            kind.to_string(),
            e.agent_id.to_string(),
            side.to_string(),
            e.qty.to_string(),
            e.price_ticks.to_string(),
            e.order_id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a sessions.csv written by [`write_sessions_csv`].
pub fn read_sessions_csv(path: &Path) -> Result<Vec<SessionSummary>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let field = |i: usize| -> Result<&str> {
            r.get(i)
                .with_context(|| format!("{}: short row", path.display()))
        };
        out.push(SessionSummary {
            session: field(0)?.parse()?,
            mm_id: field(1)?.parse()?,
            label: field(2)?.to_string(),
            mean_reward: field(3)?.parse()?,
            mean_r2: field(4)?.parse()?,
            terminal_mtm: field(5)?.parse()?,
            terminal_cash: field(6)?.parse()?,
            terminal_inventory: field(7)?.parse()?,
            mean_abs_inventory: field(8)?.parse()?,
            cash_inventory_ratio: field(9)?.parse()?,
            total_earnings: field(10)?.parse()?,
            total_hedge_cost: field(11)?.parse()?,
            eps: field(12)?.parse()?,
        });
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(ck)).with_context(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    checkpoint_from_bytes(&bytes).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Policy-library container: the per-context checkpoints plus the baseline
// replay buffer and Fisher estimates needed by the continual-learning
// baselines, in one self-describing binary file.
// ---------------------------------------------------------------------------

const LIB_MAGIC: &[u8; 4] = b"MMLB";
const LIB_VERSION: u32 = 1;

pub struct LibraryFile {
    pub context_counts: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
    pub baseline_buffer: ReplayBuffer,
    pub baseline_fisher: (FisherDiag, FisherDiag),
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_library(path: &Path, lib: &LibraryFile) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(LIB_MAGIC);
    out.extend_from_slice(&LIB_VERSION.to_le_bytes());
    out.extend_from_slice(&(lib.checkpoints.len() as u32).to_le_bytes());
    for (&count, ck) in lib.context_counts.iter().zip(&lib.checkpoints) {
        out.extend_from_slice(&(count as u32).to_le_bytes());
        let blob = checkpoint_to_bytes(ck);
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    // Baseline replay buffer.
    let n = lib.baseline_buffer.len();
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for t in lib.baseline_buffer.iter() {
        put_f64s(&mut out, &t.state);
        out.extend_from_slice(&t.action.to_le_bytes());
        put_f64s(&mut out, &t.next_state);
        out.extend_from_slice(&t.r.r1.to_le_bytes());
        out.extend_from_slice(&t.r.r2.to_le_bytes());
    }
    // Fisher estimates.
    for fisher in [&lib.baseline_fisher.0, &lib.baseline_fisher.1] {
        put_f64s(&mut out, &fisher.values);
        put_f64s(&mut out, &fisher.anchor);
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn load_library(path: &Path) -> Result<LibraryFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        if *at + n > bytes.len() {
            bail!("{}: truncated library file", path.display());
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let get_f64s = |at: &mut usize| -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(take(at, 8)?.try_into().unwrap()) as usize;
        if n > 100_000_000 {
            bail!("{}: implausible vector length", path.display());
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(f64::from_le_bytes(take(at, 8)?.try_into().unwrap()));
        }
        Ok(out)
    };

    if take(&mut at, 4)? != LIB_MAGIC {
        bail!("{}: not a policy library file", path.display());
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != LIB_VERSION {
        bail!("{}: unsupported library version {version}", path.display());
    }
    let n_policies = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut context_counts = Vec::with_capacity(n_policies);
    let mut checkpoints = Vec::with_capacity(n_policies);
    for _ in 0..n_policies {
        context_counts.push(u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize);
        let len = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
        let blob = take(&mut at, len)?;
        checkpoints
            .push(checkpoint_from_bytes(blob).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?);
    }
    let n_transitions = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
    let mut buffer = ReplayBuffer::new(n_transitions.max(1));
    for _ in 0..n_transitions {
        let state = get_f64s(&mut at)?;
        let action = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap());
        let next_state = get_f64s(&mut at)?;
        let r1 = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
        let r2 = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
        buffer.push(Transition {
            state,
            action,
            next_state,
            r: RewardVector { r1, r2 },
        });
    }
    let f1 = FisherDiag {
        values: get_f64s(&mut at)?,
        anchor: get_f64s(&mut at)?,
    };
    let f2 = FisherDiag {
        values: get_f64s(&mut at)?,
        anchor: get_f64s(&mut at)?,
    };
    if at != bytes.len() {
        bail!("{}: trailing bytes in library file", path.display());
    }
    Ok(LibraryFile {
        context_counts,
        checkpoints,
        baseline_buffer: buffer,
        baseline_fisher: (f1, f2),
    })
}
