//! Fault-tolerant blind computation on surface codes and the Steane code.

pub mod algebra;
pub mod builder;
pub mod circuit;
pub mod gadget;
pub mod decoder;
pub mod faults;
pub mod logical;
pub mod steane;
pub mod surface;
pub mod sweep;
pub mod tableau;

pub use builder::{build_circuit, BuiltCircuit, CodeNoise, LogicalOp, LogicalProgram, SeMode};
pub use circuit::{Circuit, Fault, FrameSim, Op};
pub use decoder::{BlockCorrection, BlockDem, DemEdge, EdgeKind, MatchingDecoder, Mechanism, MleTable};
pub use surface::{Basis, SurfaceCode};
pub use tableau::{Clifford, SignedPauli, Tableau};
pub use logical::{run_logical_circuit, DecoderKind, GateMix, LogicalRunConfig, LogicalRunResult, ProgramDecoder};
pub use algebra::{logical_error_algebra, AlgebraConfig, AlgebraInput, AlgebraReport};
pub use sweep::{threshold_sweep, validate_gate_scaling, ScalingConfig, ScalingReport, ThresholdConfig, ThresholdReport};
pub use steane::{steane_blind_gates, SteaneGate, SteaneReport};
pub use gadget::{magic_teleport_gadget, GadgetConfig, GadgetReport};
pub use faults::{exhaustive_single_faults, FaultCase, FaultReport};
