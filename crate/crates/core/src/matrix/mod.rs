//! Dense matrices, the N:M pattern algebra, the packed structured format and
//! matrix file IO.
//!
//! N:M blocks always run along rows (contiguous columns). When `cols % m != 0`
//! the trailing block of width `w` admits `min(n, w)` non-zeros.

mod compressed;
mod dense;
pub mod io;
mod pattern;

pub use compressed::{NmCompressed, INVALID_INDEX};
pub use dense::DenseMatrix;
pub use io::{load_csv, load_matrix, parse_csv, read_tasd1, save_matrix, write_tasd1, MAGIC};
pub use pattern::{is_compliant, NmPattern, TasdConfig};
