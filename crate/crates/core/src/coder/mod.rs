//! Range coding of quantized latents and the `.dfc` container.

mod bitstream;
mod model;
mod range;

pub use bitstream::{
    read_bitstream, write_bitstream, Bitstream, FrameRecord, DFC_HEADER_BYTES, DFC_MAGIC, DFC_VERSION,
    INTER_RECORD_BYTES, INTRA_RECORD_BYTES,
};
pub use model::{SymbolModel, FREQ_BITS, FREQ_TOTAL};
pub use range::{decode_symbols, encode_symbols, RangeDecoder, RangeEncoder};
