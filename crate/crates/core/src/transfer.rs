// SPDX-License-Identifier: Apache-2.0

//! Feature transfer: fills the empty metal block of a binary sample with the
//! opposite metal taken from its step-1 translation.
//!
//! Only the placeholder block is written. Lattice, hydrogen and the sample's
//! own metal block are copied from the original unchanged.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossgan::{self, Direction, GanError, GanModel};
use crate::encoding::{row_linf, DomainDataset, DomainTag, EncodedSample, A_BLOCK, B_BLOCK, MAX_ROWS};
use crate::poscar::wrap_unit;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("target block {0} of the original sample is already occupied")]
    SlotNotEmpty(usize),
    #[error("generated sample has no atoms in block {0}")]
    EmptyTransfer(usize),
    #[error("original sample has no occupancy record")]
    MissingOccupancy,
    #[error("every {0} sample was dropped")]
    AllSamplesDropped(TransferDirection),
    #[error("expected a {expected:?} dataset, got {found:?}")]
    WrongDomain { expected: DomainTag, found: DomainTag },
    #[error(transparent)]
    Gan(#[from] GanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferDirection {
    /// AH + B block of `G_AHB1(x)` gives AHBg.
    AhToAhbg,
    /// BH + A block of `G_BHA1(y)` gives BHAg.
    BhToBhag,
}

impl TransferDirection {
    /// The block that is filled.
    pub fn target_block(self) -> usize {
        match self {
            TransferDirection::AhToAhbg => B_BLOCK,
            TransferDirection::BhToBhag => A_BLOCK,
        }
    }

    pub fn source_tag(self) -> DomainTag {
        match self {
            TransferDirection::AhToAhbg => DomainTag::AH,
            TransferDirection::BhToBhag => DomainTag::BH,
        }
    }

    pub fn output_tag(self) -> DomainTag {
        match self {
            TransferDirection::AhToAhbg => DomainTag::AHBg,
            TransferDirection::BhToBhag => DomainTag::BHAg,
        }
    }
}

impl fmt::Display for TransferDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferDirection::AhToAhbg => "AH->AHBg",
            TransferDirection::BhToBhag => "BH->BHAg",
        })
    }
}

/// Copies the above-threshold rows of the generated target block, in order
/// and wrapped into [0, 1), into the original's empty block.
pub fn transfer(
    original: &EncodedSample,
    generated: &EncodedSample,
    direction: TransferDirection,
    threshold: f64,
) -> Result<EncodedSample, TransferError> {
    let target = direction.target_block();
    let mut occupancy = original.occupancy.ok_or(TransferError::MissingOccupancy)?;
    if occupancy[target] > 0 {
        return Err(TransferError::SlotNotEmpty(target));
    }
    let rows: Vec<[f64; 3]> = generated.blocks[target]
        .iter()
        .filter(|r| row_linf(r) > threshold)
        .map(|r| r.map(wrap_unit))
        .collect();
    if rows.is_empty() {
        return Err(TransferError::EmptyTransfer(target));
    }
    let mut out = original.clone();
    out.blocks[target] = [[0.0; 3]; MAX_ROWS];
    out.blocks[target][..rows.len()].copy_from_slice(&rows);
    occupancy[target] = rows.len();
    out.occupancy = Some(occupancy);
    if out.labels[target].is_none() {
        out.labels[target] = generated.labels[target].clone();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub direction: TransferDirection,
    pub source: String,
    /// Atoms written into the placeholder block; 0 when dropped.
    pub transferred: usize,
    pub dropped: bool,
}

/// Provenance of a step-2 dataset build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferManifest {
    pub step1_checksum: String,
    pub threshold: f64,
    pub records: Vec<TransferRecord>,
    pub dropped_ah: usize,
    pub dropped_bh: usize,
}

fn transfer_all(
    data: &DomainDataset,
    model: &GanModel,
    direction: TransferDirection,
    threshold: f64,
    records: &mut Vec<TransferRecord>,
) -> Result<(DomainDataset, usize), TransferError> {
    if data.domain_tag != direction.source_tag() {
        return Err(TransferError::WrongDomain {
            expected: direction.source_tag(),
            found: data.domain_tag,
        });
    }
    let gen_dir = match direction {
        TransferDirection::AhToAhbg => Direction::Forward,
        TransferDirection::BhToBhag => Direction::Backward,
    };
    let generated = crossgan::generate(model, data, data.len(), gen_dir)?;
    let mut out = DomainDataset {
        domain_tag: direction.output_tag(),
        element_a: data.element_a.clone(),
        element_b: data.element_b.clone(),
        names: Vec::new(),
        samples: Vec::new(),
    };
    let mut dropped = 0;
    for ((name, original), g) in data.names.iter().zip(&data.samples).zip(&generated) {
        match transfer(original, &g.sample, direction, threshold) {
            Ok(s) => {
                records.push(TransferRecord {
                    direction,
                    source: name.clone(),
                    transferred: s.occupancy.expect("set by transfer")[direction.target_block()],
                    dropped: false,
                });
                out.names.push(name.clone());
                out.samples.push(s);
            }
            Err(TransferError::EmptyTransfer(_)) => {
                dropped += 1;
                records.push(TransferRecord {
                    direction,
                    source: name.clone(),
                    transferred: 0,
                    dropped: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if dropped > 0 {
        log::info!("{direction}: dropped {dropped} of {} samples", data.len());
    }
    if out.is_empty() {
        return Err(TransferError::AllSamplesDropped(direction));
    }
    Ok((out, dropped))
}

/// AHBg and BHAg training sets from a trained step-1 model, in input order.
pub fn build_step2_datasets(
    data_ah: &DomainDataset,
    data_bh: &DomainDataset,
    step1: &GanModel,
    threshold: f64,
) -> Result<(DomainDataset, DomainDataset, TransferManifest), TransferError> {
    let mut records = Vec::new();
    let (ahbg, dropped_ah) = transfer_all(data_ah, step1, TransferDirection::AhToAhbg, threshold, &mut records)?;
    let (bhag, dropped_bh) = transfer_all(data_bh, step1, TransferDirection::BhToBhag, threshold, &mut records)?;
    let manifest = TransferManifest {
        step1_checksum: step1.checksum(),
        threshold,
        records,
        dropped_ah,
        dropped_bh,
    };
    Ok((ahbg, bhag, manifest))
}
