//! File codecs: CSV tables, the PSPE/PSPW binaries and binary PGM/PPM.

pub mod csv;
pub mod pnm;
pub mod pspe;

pub use self::pspe::FileHeader;
