//! Document input and output: the PSD subset and the canonical JSON format.

pub mod canonical;
pub mod packbits;
pub mod psd;

pub use canonical::{read_doc, read_doc_dir, write_doc, write_doc_dir, CanonicalError};
pub use packbits::{decode_packbits, encode_packbits, PackBitsError};
pub use psd::{read_psd, write_psd, PsdError, PsdSubsetReport};
