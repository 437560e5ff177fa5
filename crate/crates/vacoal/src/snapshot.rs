//! Binary persistence of a learned memory: header, label table, raw cells,
//! optional rescue table. The diffuser bank is stored as its parameters
//! only; polynomials and seeds are re-derived from the master seed.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::blockmem::{BlockMemory, LabelTable, MemoryStats};
use crate::error::Error;
use crate::galois::DiffuserBank;
use crate::rescue::RescueTable;
use crate::Result;

const MAGIC: &[u8; 8] = b"VACMEM01";
const VERSION: u32 = 1;

#[derive(Debug)]
pub struct Snapshot {
    pub memory: BlockMemory,
    pub bank: DiffuserBank,
    pub rescue: Option<RescueTable>,
}

pub fn save(
    path: &Path,
    memory: &BlockMemory,
    bank: &DiffuserBank,
    rescue: Option<&RescueTable>,
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(memory.blocks() as u64).to_le_bytes())?;
    w.write_all(&memory.m().to_le_bytes())?;
    w.write_all(&(bank.total_bits() as u64).to_le_bytes())?;
    w.write_all(&bank.master_seed().to_le_bytes())?;

    let stats = memory.stats();
    w.write_all(&stats.write_attempts.to_le_bytes())?;
    w.write_all(&stats.collision_events.to_le_bytes())?;
    w.write_all(&stats.collided_cells.to_le_bytes())?;
    w.write_all(&stats.entries_learned.to_le_bytes())?;

    let labels = memory.labels();
    w.write_all(&(labels.len() as u64).to_le_bytes())?;
    for name in labels.names() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }

    let mut buf = Vec::with_capacity(64 * 1024);
    for chunk in memory.raw_cells().chunks(16 * 1024) {
        buf.clear();
        for &cell in chunk {
            buf.extend_from_slice(&cell.to_le_bytes());
        }
        w.write_all(&buf)?;
    }

    match rescue {
        Some(table) => {
            w.write_all(&[1u8])?;
            table.write_to(&mut w)?;
        }
        None => w.write_all(&[0u8])?,
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a memory snapshot".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let blocks = read_u64(&mut r)? as usize;
    let m = read_u32(&mut r)?;
    let total_bits = read_u64(&mut r)? as usize;
    let master_seed = read_u64(&mut r)?;

    let stats = MemoryStats {
        write_attempts: read_u64(&mut r)?,
        collision_events: read_u64(&mut r)?,
        collided_cells: read_u64(&mut r)?,
        entries_learned: read_u64(&mut r)?,
    };

    let label_count = read_u64(&mut r)?;
    let mut labels = LabelTable::new();
    for _ in 0..label_count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name =
            String::from_utf8(name).map_err(|_| Error::Format("label is not UTF-8".into()))?;
        labels.get_or_insert(&name)?;
    }

    let cell_count = blocks
        .checked_shl(m)
        .ok_or_else(|| Error::Format("cell count overflow".into()))?;
    let mut cells = vec![0i32; cell_count];
    let mut buf = vec![0u8; 64 * 1024];
    let mut filled = 0usize;
    while filled < cell_count {
        let take = (cell_count - filled).min(buf.len() / 4);
        r.read_exact(&mut buf[..take * 4])?;
        for i in 0..take {
            cells[filled + i] = i32::from_le_bytes(buf[i * 4..i * 4 + 4].try_into().unwrap());
        }
        filled += take;
    }

    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let rescue = if flag[0] == 1 {
        Some(RescueTable::read_from(&mut r)?)
    } else {
        None
    };

    let bank = DiffuserBank::for_dimensions(master_seed, blocks, m, total_bits)?;
    let memory = BlockMemory::from_parts(blocks, m, cells, labels, stats);
    Ok(Snapshot {
        memory,
        bank,
        rescue,
    })
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
