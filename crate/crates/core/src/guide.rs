//! The mdbook chapters, compiled here so their snippets run as doctests.

#[doc = include_str!("../../../book/src/overview.md")]
pub struct Overview;

#[doc = include_str!("../../../book/src/modes.md")]
pub struct Modes;

#[doc = include_str!("../../../book/src/compiler.md")]
pub struct Compiler;

#[doc = include_str!("../../../book/src/simulation.md")]
pub struct Simulation;

#[doc = include_str!("../../../book/src/analytic.md")]
pub struct Analytic;

#[doc = include_str!("../../../book/src/fock.md")]
pub struct Fock;

#[doc = include_str!("../../../book/src/scenarios.md")]
pub struct Scenarios;
