//! Deterministic shared-file layout planning.
//!
//! Every rank runs the same computation over the same gathered size
//! estimates and arrives at the same byte-identical plan, so no further
//! coordination is needed before writing. Reserved regions pad the
//! predicted sizes by the extra-space ratio; blocks that still exceed
//! their reservation spill into an overflow region appended at the end.

use crate::error::{Error, Result};

pub const METADATA_MAGIC: [u8; 4] = *b"OCM1";
pub const METADATA_VERSION: u16 = 1;
pub const METADATA_ENTRY_BYTES: usize = 32;
const METADATA_HEADER_BYTES: usize = 4 + 2 + 8;

/// Extra-space reservation policy. The supported ratio range trades a few
/// percent of storage for overflow-free writes; outside it the trade is
/// poor in both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraSpacePolicy {
    pub r_space: f64,
    /// Compression ratio above which the reservation is boosted: size
    /// predictions degrade badly for highly compressible partitions.
    pub high_ratio_threshold: f64,
}

pub const R_SPACE_MIN: f64 = 1.1;
pub const R_SPACE_MAX: f64 = 1.43;

impl Default for ExtraSpacePolicy {
    fn default() -> Self {
        ExtraSpacePolicy { r_space: 1.25, high_ratio_threshold: 32.0 }
    }
}

impl ExtraSpacePolicy {
    pub fn new(r_space: f64) -> Result<Self> {
        let policy = ExtraSpacePolicy { r_space, ..Default::default() };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(R_SPACE_MIN..=R_SPACE_MAX).contains(&self.r_space) {
            return Err(Error::invalid(format!(
                "extra space ratio must lie in [{R_SPACE_MIN}, {R_SPACE_MAX}], got {}",
                self.r_space
            )));
        }
        if !(self.high_ratio_threshold > 1.0) {
            return Err(Error::invalid(format!(
                "high-ratio threshold must exceed 1, got {}",
                self.high_ratio_threshold
            )));
        }
        Ok(())
    }
}

/// Per-partition extra-space ratio. Past the high-ratio threshold the
/// configured ratio is stretched fourfold (capped at 2): predicted sizes
/// are least trustworthy exactly where the data is most compressible.
pub fn effective_extra_ratio(policy: &ExtraSpacePolicy, r_comp_est: f64) -> Result<f64> {
    policy.validate()?;
    if !(r_comp_est > 0.0) {
        return Err(Error::invalid(format!(
            "estimated compression ratio must be positive, got {r_comp_est}"
        )));
    }
    if r_comp_est > policy.high_ratio_threshold {
        Ok(2.0f64.min(1.0 + (policy.r_space - 1.0) * 4.0))
    } else {
        Ok(policy.r_space)
    }
}

/// One rank's size prediction for one field partition, as exchanged in
/// the pre-write all-gather.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionEstimate {
    pub rank: u32,
    pub field_index: u32,
    pub predicted_bytes: u64,
    pub predicted_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEntry {
    pub rank: u32,
    pub field_index: u32,
    pub reserved_offset: u64,
    pub reserved_size: u64,
    pub predicted_size: u64,
}

/// The shared-file layout: reserved, gap-free intervals in
/// (field, rank) order starting right after the container header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    pub entries: Vec<PlanEntry>,
    pub base_offset: u64,
    /// End of the reserved region == base_offset + sum of reserved sizes.
    pub total_reserved: u64,
    ranks: u32,
    fields: u32,
}

impl LayoutPlan {
    pub fn ranks(&self) -> u32 {
        self.ranks
    }

    pub fn fields(&self) -> u32 {
        self.fields
    }

    /// Entries are stored in (field, rank) order.
    pub fn entry(&self, rank: u32, field_index: u32) -> &PlanEntry {
        &self.entries[(field_index * self.ranks + rank) as usize]
    }

    /// Order-sensitive digest over every field of every entry; equal
    /// fingerprints on all ranks certify the all-gather stayed consistent.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(16 + self.entries.len() * 32);
        bytes.extend_from_slice(&self.base_offset.to_le_bytes());
        bytes.extend_from_slice(&self.total_reserved.to_le_bytes());
        for e in &self.entries {
            bytes.extend_from_slice(&e.rank.to_le_bytes());
            bytes.extend_from_slice(&e.field_index.to_le_bytes());
            bytes.extend_from_slice(&e.reserved_offset.to_le_bytes());
            bytes.extend_from_slice(&e.reserved_size.to_le_bytes());
            bytes.extend_from_slice(&e.predicted_size.to_le_bytes());
        }
        crate::codec::fnv1a(&bytes)
    }
}

fn align8(x: u64) -> u64 {
    (x + 7) & !7
}

/// Compute the layout from the gathered estimates. Requires one estimate
/// per (rank, field) pair; deterministic, so independent calls on every
/// rank agree byte for byte.
pub fn plan_offsets(
    estimates: &[PartitionEstimate],
    ranks: u32,
    fields: u32,
    policy: &ExtraSpacePolicy,
    base_offset: u64,
) -> Result<LayoutPlan> {
    policy.validate()?;
    if ranks == 0 || fields == 0 {
        return Err(Error::invalid("plan needs at least one rank and one field"));
    }
    let expected = ranks as usize * fields as usize;
    if estimates.len() != expected {
        return Err(Error::IncompleteGather(format!(
            "expected {expected} estimates for {ranks} ranks x {fields} fields, got {}",
            estimates.len()
        )));
    }
    let mut table: Vec<Option<&PartitionEstimate>> = vec![None; expected];
    for est in estimates {
        if est.rank >= ranks || est.field_index >= fields {
            return Err(Error::IncompleteGather(format!(
                "estimate for rank {} field {} outside {ranks}x{fields}",
                est.rank, est.field_index
            )));
        }
        let slot = (est.field_index * ranks + est.rank) as usize;
        if table[slot].is_some() {
            return Err(Error::IncompleteGather(format!(
                "duplicate estimate for rank {} field {}",
                est.rank, est.field_index
            )));
        }
        table[slot] = Some(est);
    }

    let mut entries = Vec::with_capacity(expected);
    let mut cursor = base_offset;
    for slot in table {
        let est = slot.expect("all slots filled by count check");
        let ratio = effective_extra_ratio(policy, est.predicted_ratio)?;
        let reserved = align8(((est.predicted_bytes as f64 * ratio).ceil() as u64).max(1));
        entries.push(PlanEntry {
            rank: est.rank,
            field_index: est.field_index,
            reserved_offset: cursor,
            reserved_size: reserved,
            predicted_size: est.predicted_bytes,
        });
        cursor += reserved;
    }
    Ok(LayoutPlan { entries, base_offset, total_reserved: cursor, ranks, fields })
}

/// Final per-partition placement record kept in the container so the read
/// path can reassemble blocks without recomputing any plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetMetadataEntry {
    pub reserved_offset: u64,
    pub actual_size: u64,
    /// Zero when the block fit its reservation.
    pub overflow_offset: u64,
    pub overflow_size: u64,
}

impl OffsetMetadataEntry {
    pub fn has_overflow(&self) -> bool {
        self.overflow_size > 0
    }

    pub fn validate(&self) -> Result<()> {
        if (self.overflow_offset == 0) != (self.overflow_size == 0) {
            return Err(Error::decode(format!(
                "overflow fields must be zero together, got offset {} size {}",
                self.overflow_offset, self.overflow_size
            )));
        }
        if self.overflow_size > self.actual_size {
            return Err(Error::decode("overflow larger than the block itself"));
        }
        Ok(())
    }
}

/// Encode metadata entries in plan order: magic, version, count, then
/// packed 32-byte entries.
pub fn encode_metadata(entries: &[OffsetMetadataEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(METADATA_HEADER_BYTES + entries.len() * METADATA_ENTRY_BYTES);
    out.extend_from_slice(&METADATA_MAGIC);
    out.extend_from_slice(&METADATA_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&e.reserved_offset.to_le_bytes());
        out.extend_from_slice(&e.actual_size.to_le_bytes());
        out.extend_from_slice(&e.overflow_offset.to_le_bytes());
        out.extend_from_slice(&e.overflow_size.to_le_bytes());
    }
    out
}

pub fn decode_metadata(bytes: &[u8]) -> Result<Vec<OffsetMetadataEntry>> {
    if bytes.len() < METADATA_HEADER_BYTES {
        return Err(Error::decode("metadata block truncated"));
    }
    if bytes[..4] != METADATA_MAGIC {
        return Err(Error::decode("bad metadata magic"));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != METADATA_VERSION {
        return Err(Error::decode(format!("unsupported metadata version {version}")));
    }
    let count = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let expected = METADATA_HEADER_BYTES + count * METADATA_ENTRY_BYTES;
    if bytes.len() != expected {
        return Err(Error::decode(format!(
            "metadata block is {} bytes, {} entries need {expected}",
            bytes.len(),
            count
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let at = METADATA_HEADER_BYTES + i * METADATA_ENTRY_BYTES;
        let u = |o: usize| u64::from_le_bytes(bytes[at + o..at + o + 8].try_into().unwrap());
        let entry = OffsetMetadataEntry {
            reserved_offset: u(0),
            actual_size: u(8),
            overflow_offset: u(16),
            overflow_size: u(24),
        };
        entry.validate()?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Offsets-only view: 8 bytes per entry, the irreducible cost of knowing
/// where every partition lives.
pub fn offsets_only_projection(entries: &[OffsetMetadataEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(entries.len() * 8);
    for e in entries {
        out.extend_from_slice(&e.reserved_offset.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn high_ratio_branch_stretches_reservation() {
        let p = ExtraSpacePolicy { r_space: 1.25, high_ratio_threshold: 32.0 };
        assert_eq!(effective_extra_ratio(&p, 40.0).unwrap(), 2.0);
        let p = ExtraSpacePolicy { r_space: 1.1, high_ratio_threshold: 32.0 };
        let got = effective_extra_ratio(&p, 50.0).unwrap();
        assert!((got - 1.4).abs() < 1e-12, "got {got}");
        let p = ExtraSpacePolicy { r_space: 1.25, high_ratio_threshold: 32.0 };
        assert_eq!(effective_extra_ratio(&p, 16.0).unwrap(), 1.25);
        // Exactly at the threshold: passthrough (strictly-above rule).
        assert_eq!(effective_extra_ratio(&p, 32.0).unwrap(), 1.25);
    }

    #[test]
    fn policy_range_is_enforced() {
        assert!(ExtraSpacePolicy::new(1.05).is_err());
        assert!(ExtraSpacePolicy::new(1.5).is_err());
        assert!(ExtraSpacePolicy::new(1.1).is_ok());
        assert!(ExtraSpacePolicy::new(1.43).is_ok());
        let bad = ExtraSpacePolicy { r_space: 1.2, high_ratio_threshold: 0.5 };
        assert!(effective_extra_ratio(&bad, 2.0).is_err());
        let ok = ExtraSpacePolicy::default();
        assert!(effective_extra_ratio(&ok, 0.0).is_err());
    }

    fn est(rank: u32, field: u32, bytes: u64, ratio: f64) -> PartitionEstimate {
        PartitionEstimate { rank, field_index: field, predicted_bytes: bytes, predicted_ratio: ratio }
    }

    #[test]
    fn two_rank_example_layout() {
        let policy = ExtraSpacePolicy::default();
        let header = 31u64;
        let estimates = vec![est(0, 0, 100, 10.0), est(1, 0, 200, 10.0)];
        let plan = plan_offsets(&estimates, 2, 1, &policy, header).unwrap();
        // ceil(100 * 1.25) = 125 -> 128 after 8-byte alignment;
        // ceil(200 * 1.25) = 250 -> 256.
        assert_eq!(plan.entry(0, 0).reserved_size, 128);
        assert_eq!(plan.entry(1, 0).reserved_size, 256);
        assert_eq!(plan.entry(0, 0).reserved_offset, header);
        assert_eq!(plan.entry(1, 0).reserved_offset, header + 128);
        assert_eq!(plan.total_reserved, header + 128 + 256);
    }

    #[test]
    fn equal_predictions_give_arithmetic_progression() {
        let policy = ExtraSpacePolicy::default();
        let mut estimates = Vec::new();
        for f in 0..3 {
            for r in 0..4 {
                estimates.push(est(r, f, 1000, 5.0));
            }
        }
        let plan = plan_offsets(&estimates, 4, 3, &policy, 64).unwrap();
        let step = plan.entries[0].reserved_size;
        for (i, e) in plan.entries.iter().enumerate() {
            assert_eq!(e.reserved_size, step);
            assert_eq!(e.reserved_offset, 64 + i as u64 * step);
        }
    }

    #[test]
    fn entries_are_field_major_disjoint_and_gap_free() {
        let policy = ExtraSpacePolicy::default();
        let mut estimates = Vec::new();
        for r in 0..5u32 {
            for f in 0..4u32 {
                estimates.push(est(r, f, 100 + (r * 37 + f * 101) as u64, 3.0 + f as f64));
            }
        }
        let plan = plan_offsets(&estimates, 5, 4, &policy, 31).unwrap();
        let mut cursor = 31u64;
        let mut total = 0u64;
        for (i, e) in plan.entries.iter().enumerate() {
            assert_eq!(e.field_index, i as u32 / 5);
            assert_eq!(e.rank, i as u32 % 5);
            assert_eq!(e.reserved_offset, cursor, "gap before entry {i}");
            cursor += e.reserved_size;
            total += e.reserved_size;
        }
        assert_eq!(plan.total_reserved, 31 + total);
    }

    #[test]
    fn missing_and_duplicate_estimates_error() {
        let policy = ExtraSpacePolicy::default();
        let estimates = vec![est(0, 0, 100, 10.0)];
        assert!(matches!(
            plan_offsets(&estimates, 2, 1, &policy, 0),
            Err(Error::IncompleteGather(_))
        ));
        let estimates = vec![est(0, 0, 100, 10.0), est(0, 0, 120, 10.0)];
        assert!(matches!(
            plan_offsets(&estimates, 2, 1, &policy, 0),
            Err(Error::IncompleteGather(_))
        ));
        let estimates = vec![est(0, 0, 100, 10.0), est(5, 0, 120, 10.0)];
        assert!(plan_offsets(&estimates, 2, 1, &policy, 0).is_err());
    }

    #[test]
    fn plans_are_identical_across_threads() {
        let mut estimates = Vec::new();
        for r in 0..8u32 {
            for f in 0..6u32 {
                estimates.push(est(r, f, (r as u64 + 1) * 997 + f as u64 * 13, 2.0 + r as f64));
            }
        }
        let policy = ExtraSpacePolicy::new(1.15).unwrap();
        let reference = plan_offsets(&estimates, 8, 6, &policy, 31).unwrap();
        let plans: Vec<LayoutPlan> = std::thread::scope(|s| {
            (0..8)
                .map(|_| s.spawn(|| plan_offsets(&estimates, 8, 6, &policy, 31).unwrap()))
                .collect::<Vec<_>>()
                .into_iter()
                .map(|h| h.join().unwrap())
                .collect()
        });
        for p in plans {
            assert_eq!(p, reference);
            assert_eq!(p.fingerprint(), reference.fingerprint());
        }
    }

    #[test]
    fn reservations_grow_with_r_space() {
        let mut estimates = Vec::new();
        for r in 0..4u32 {
            estimates.push(est(r, 0, 5000 + r as u64 * 313, 20.0 + 10.0 * r as f64));
        }
        let mut prev: Option<Vec<u64>> = None;
        for r_space in [1.10, 1.15, 1.25, 1.43] {
            let policy = ExtraSpacePolicy::new(r_space).unwrap();
            let plan = plan_offsets(&estimates, 4, 1, &policy, 0).unwrap();
            let sizes: Vec<u64> = plan.entries.iter().map(|e| e.reserved_size).collect();
            if let Some(prev) = &prev {
                for (a, b) in prev.iter().zip(&sizes) {
                    assert!(b >= a, "reservation shrank when r_space grew");
                }
            }
            prev = Some(sizes);
        }
    }

    #[test]
    fn metadata_round_trip_and_projection_size() {
        let entries: Vec<OffsetMetadataEntry> = (0..9 * 4096u64)
            .map(|i| OffsetMetadataEntry {
                reserved_offset: 31 + i * 64,
                actual_size: 48 + (i % 17),
                overflow_offset: if i % 100 == 0 { 1 << 30 } else { 0 },
                overflow_size: if i % 100 == 0 { 24 } else { 0 },
            })
            .collect();
        let encoded = encode_metadata(&entries);
        assert_eq!(encoded.len(), 14 + entries.len() * METADATA_ENTRY_BYTES);
        let back = decode_metadata(&encoded).unwrap();
        assert_eq!(back, entries);

        // Offsets-only view of 9 fields across 4096 ranks: 294,912 bytes.
        let projection = offsets_only_projection(&entries);
        assert_eq!(projection.len(), 294_912);
    }

    #[test]
    fn empty_metadata_round_trips() {
        let encoded = encode_metadata(&[]);
        assert_eq!(encoded.len(), 14);
        assert!(decode_metadata(&encoded).unwrap().is_empty());
    }

    #[test]
    fn corrupt_metadata_errors() {
        let entries = vec![OffsetMetadataEntry {
            reserved_offset: 31,
            actual_size: 100,
            overflow_offset: 0,
            overflow_size: 0,
        }];
        let encoded = encode_metadata(&entries);
        assert!(decode_metadata(&encoded[..encoded.len() - 1]).is_err());
        assert!(decode_metadata(&encoded[..10]).is_err());
        let mut bad_magic = encoded.clone();
        bad_magic[0] = b'X';
        assert!(decode_metadata(&bad_magic).is_err());
        // Inconsistent overflow pair.
        let mut bad_pair = encoded;
        bad_pair[14 + 16] = 1;
        assert!(decode_metadata(&bad_pair).is_err());
    }

    #[test]
    fn single_entry_round_trip_bit_exact() {
        let e = OffsetMetadataEntry {
            reserved_offset: 0xDEAD_BEEF,
            actual_size: 0x1234_5678_9ABC,
            overflow_offset: 0xFFFF_0000,
            overflow_size: 7,
        };
        let enc = encode_metadata(&[e]);
        let twice = encode_metadata(&decode_metadata(&enc).unwrap());
        assert_eq!(enc, twice);
    }
}
