//! The guide in `book/`, compiled so its snippets run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("../../../book/src/nzcount.md")]
pub mod nzcount {}
#[doc = include_str!("../../../book/src/families.md")]
pub mod families {}
#[doc = include_str!("../../../book/src/occ_tables.md")]
pub mod occ_tables {}
#[doc = include_str!("../../../book/src/recovery.md")]
pub mod recovery {}
#[doc = include_str!("../../../book/src/tensors.md")]
pub mod tensors {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
