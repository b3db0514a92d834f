//! Gray-mapped constellations with unit average energy.
//!
//! A symbol index is the integer formed by its label bits (first bit most
//! significant), so the bit distance between two indices is the Hamming
//! distance of the labels. The constellations are laid out so that
//! nearest-neighbour points differ in exactly one label bit.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModulationKind {
    Bpsk,
    Qpsk,
    Qam16,
}

impl ModulationKind {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationKind::Bpsk => 1,
            ModulationKind::Qpsk => 2,
            ModulationKind::Qam16 => 4,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationKind::Bpsk => "bpsk",
            ModulationKind::Qpsk => "qpsk",
            ModulationKind::Qam16 => "qam16",
        }
    }
}

/// Gray-labelled 4-level amplitudes for one 16QAM axis, indexed by the two
/// label bits: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
const PAM4_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

/// Constellation with its Gray bit labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationScheme {
    kind: ModulationKind,
    points: Vec<Complex64>,
}

impl ModulationScheme {
    pub fn new(kind: ModulationKind) -> Self {
        let points = match kind {
            // Bit 0 -> +1, bit 1 -> -1.
            ModulationKind::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            // Index bits (b0, b1): in-phase sign from b0, quadrature from b1.
            ModulationKind::Qpsk => {
                let a = 0.5_f64.sqrt();
                (0..4)
                    .map(|idx| {
                        let i = if idx & 0b10 == 0 { a } else { -a };
                        let q = if idx & 0b01 == 0 { a } else { -a };
                        Complex64::new(i, q)
                    })
                    .collect()
            }
            // Index bits (b0 b1 b2 b3): (b0, b1) select the in-phase level,
            // (b2, b3) the quadrature level, each via a reflected Gray code.
            ModulationKind::Qam16 => {
                let scale = 1.0 / 10.0_f64.sqrt();
                (0..16)
                    .map(|idx: usize| {
                        let i = PAM4_GRAY[(idx >> 2) & 0b11] * scale;
                        let q = PAM4_GRAY[idx & 0b11] * scale;
                        Complex64::new(i, q)
                    })
                    .collect()
            }
        };
        Self { kind, points }
    }

    pub fn kind(&self) -> ModulationKind {
        self.kind
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    pub fn order(&self) -> usize {
        self.kind.order()
    }

    /// Constellation points indexed by label value.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Maps a bit sequence to symbols; the bit count must divide into whole
    /// symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Vec<Complex64> {
        let bps = self.bits_per_symbol();
        assert!(bits.len() % bps == 0, "bit count must be a multiple of {bps}");
        bits.chunks(bps)
            .map(|chunk| {
                let idx = chunk.iter().fold(0usize, |acc, &b| {
                    debug_assert!(b <= 1);
                    (acc << 1) | b as usize
                });
                self.points[idx]
            })
            .collect()
    }

    /// Inverse of [`Self::map_bits`] on hard symbol indices.
    pub fn demap_symbols(&self, indices: &[usize]) -> Vec<u8> {
        let bps = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(indices.len() * bps);
        for &idx in indices {
            debug_assert!(idx < self.order());
            for k in (0..bps).rev() {
                bits.push(((idx >> k) & 1) as u8);
            }
        }
        bits
    }

    /// Number of differing label bits between two symbol indices.
    pub fn bit_distance(&self, a: usize, b: usize) -> u32 {
        (a ^ b).count_ones()
    }
}
