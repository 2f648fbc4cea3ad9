//! Support recovery for mixtures of sparse linear classifiers and regressions
//! from noisy oracle queries.
//!
//! The hidden object is a set of `ell` sparse vectors in `R^n`. Each query
//! `x` is answered by one vector picked uniformly at random, through
//! `sign(<x, v>)` with random label flips (MLC) or `<x, v> + N(0, sigma^2)`
//! (MLR). The crate recovers the support of every hidden vector, with
//! multiplicity, without estimating the values.
//!
//! Pipeline:
//! - [`nzcount`] estimates how many hidden vectors have a nonzero inner
//!   product with a query, by repeating it.
//! - [`occ_engine`] turns those estimates into an [`occ_engine::OccTable`]:
//!   the number of vectors whose support restricted to an index tuple `C`
//!   equals a pattern `a`, for every `|C| <= s`.
//! - [`recovery`] reads the supports off the table with one of three
//!   algorithms (p-identifiable, flip-independent, Kruskal rank).
//!
//! ```
//! use mixrec::model::{generate_instance, support_matrix, GeneratorSpec, SupportMode};
//! use mixrec::ground_truth::exact_occ_table;
//! use mixrec::recovery::recover_p_identifiable;
//! use mixrec::ground_truth::supports_equal_up_to_permutation;
//!
//! let spec = GeneratorSpec::new(40, 3, 5, SupportMode::UnionDesign, 7);
//! let inst = generate_instance(&spec).unwrap();
//! let truth = support_matrix(&inst);
//! let table = exact_occ_table(&truth, 3);
//! let out = recover_p_identifiable(&table, 3, 2).unwrap();
//! assert!(supports_equal_up_to_permutation(&out.supports, &truth.columns));
//! ```

pub mod exact;
pub mod ground_truth;
pub mod harness;
pub mod model;
pub mod nzcount;
pub mod occ_engine;
pub mod oracle;
pub mod recovery;
pub mod rng;
pub mod set_families;
pub mod tensor;

pub use model::{MixtureInstance, SupportMatrix};
pub use occ_engine::OccTable;
pub use oracle::{Model, OracleHandle};
