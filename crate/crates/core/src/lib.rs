//! Curation and evaluation toolkit for semantic-edit robustness studies of
//! visual question answering models.
//!
//! The crate covers two halves of the workflow:
//!
//! * **Edit selection.** Annotation corpora are ingested ([`coco`], [`vqa`]),
//!   question/answer wording is mapped onto object categories ([`vocab`]) and
//!   removal candidates are chosen by category algebra, an area threshold and
//!   a mask overlap score ([`mask`], [`select`]). The result is a
//!   line-delimited edit manifest ([`manifest`]) that [`inpaint`] hands to an
//!   external object-removal tool.
//! * **Evaluation.** Model predictions on original and edited records are
//!   compared with the flip taxonomy ([`consistency`]), fine-tuning subsets
//!   are planned ([`augment`]) and human validation labels are summarized
//!   ([`agreement`]).

pub mod agreement;
pub mod augment;
pub mod coco;
pub mod consistency;
pub mod error;
pub mod inpaint;
pub mod manifest;
pub mod mask;
pub mod rle;
pub mod select;
pub mod text;
pub mod vocab;
pub mod vqa;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/consistency.md")]
    mod consistency {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/review.md")]
    mod review {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
