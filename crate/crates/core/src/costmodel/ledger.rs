use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Serialize, Serializer};

/// Sub-counters of a [`TransferLedger`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    /// Selected key components across all positions (SparQ step 1).
    KeyComponents,
    /// Full key vectors of attended positions.
    KeyPositions,
    /// Value vectors of attended positions.
    Values,
    /// Writing the current token's key and value.
    KvAppend,
    /// Running mean value vector read and write-back.
    MeanVector,
    /// Accumulated attention score vector (H2O).
    ScoreBookkeeping,
    /// Second key write for the component-major layout. Not part of the
    /// analytic formulas, so it is excluded from reconciliation.
    DualLayoutKey,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::KeyComponents,
        Category::KeyPositions,
        Category::Values,
        Category::KvAppend,
        Category::MeanVector,
        Category::ScoreBookkeeping,
        Category::DualLayoutKey,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::KeyComponents => "k-components",
            Category::KeyPositions => "k-positions",
            Category::Values => "v",
            Category::KvAppend => "kv-append",
            Category::MeanVector => "mean-vector",
            Category::ScoreBookkeeping => "score-bookkeeping",
            Category::DualLayoutKey => "dual-layout-key",
        }
    }

    /// Whether the category participates in the closed-form transfer model.
    pub fn is_modeled(self) -> bool {
        self != Category::DualLayoutKey
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

const N: usize = Category::ALL.len();

/// Counted scalar-element reads and writes, split by category.
///
/// Ledgers are call-local: each operation charges into the ledger it is
/// handed, and callers merge them with `+`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferLedger {
    reads: [u64; N],
    writes: [u64; N],
    /// Key-component reads that hit a position-contiguous layout. Reported
    /// only; never part of any total.
    strided_key_reads: u64,
}

impl TransferLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read(&mut self, category: Category, elements: u64) {
        self.reads[category.slot()] += elements;
    }

    pub fn write(&mut self, category: Category, elements: u64) {
        self.writes[category.slot()] += elements;
    }

    pub(crate) fn note_strided(&mut self, elements: u64) {
        self.strided_key_reads += elements;
    }

    pub fn reads_in(&self, category: Category) -> u64 {
        self.reads[category.slot()]
    }

    pub fn writes_in(&self, category: Category) -> u64 {
        self.writes[category.slot()]
    }

    pub fn in_category(&self, category: Category) -> u64 {
        self.reads_in(category) + self.writes_in(category)
    }

    pub fn read_elements(&self) -> u64 {
        self.reads.iter().sum()
    }

    pub fn write_elements(&self) -> u64 {
        self.writes.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.read_elements() + self.write_elements()
    }

    /// Total over the categories covered by the analytic formulas.
    pub fn modeled_total(&self) -> u64 {
        Category::ALL
            .iter()
            .filter(|c| c.is_modeled())
            .map(|&c| self.in_category(c))
            .sum()
    }

    pub fn strided_key_reads(&self) -> u64 {
        self.strided_key_reads
    }

    /// Byte view for a given element width.
    pub fn total_bytes(&self, element_width: u64) -> u64 {
        self.total() * element_width
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0 && self.strided_key_reads == 0
    }

    pub fn breakdown(&self) -> Vec<CategoryCount> {
        Category::ALL
            .iter()
            .map(|&category| CategoryCount {
                category,
                reads: self.reads_in(category),
                writes: self.writes_in(category),
            })
            .collect()
    }
}

impl AddAssign for TransferLedger {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..N {
            self.reads[i] += rhs.reads[i];
            self.writes[i] += rhs.writes[i];
        }
        self.strided_key_reads += rhs.strided_key_reads;
    }
}

impl Add for TransferLedger {
    type Output = TransferLedger;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl Serialize for TransferLedger {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TransferLedger", 5)?;
        st.serialize_field("read_elements", &self.read_elements())?;
        st.serialize_field("write_elements", &self.write_elements())?;
        st.serialize_field("modeled_total", &self.modeled_total())?;
        st.serialize_field("strided_key_reads", &self.strided_key_reads)?;
        st.serialize_field("categories", &self.breakdown())?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CategoryCount {
    pub category: Category,
    pub reads: u64,
    pub writes: u64,
}
