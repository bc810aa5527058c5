// SPDX-License-Identifier: Apache-2.0

//! Two-step cross-domain GAN for generating ternary hydride crystal
//! candidates from binary-hydride POSCAR corpora.

pub mod corpus;
pub mod crossgan;
pub mod encoding;
pub mod geometry;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod poscar;
pub mod transfer;
