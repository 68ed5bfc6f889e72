use crate::cpm::Detection;
use crate::geometry::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalOrigin {
    Local,
    Collective,
}

/// A region proposal for the second stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: OrientedBox,
    pub objectness: f64,
    pub origin: ProposalOrigin,
}

impl Proposal {
    pub fn local(det: &Detection) -> Self {
        Self { bbox: det.bbox, objectness: det.confidence, origin: ProposalOrigin::Local }
    }

    /// A received detection used as a proposal; its confidence becomes the
    /// objectness score.
    pub fn collective(det: &Detection) -> Self {
        Self { bbox: det.bbox, objectness: det.confidence, origin: ProposalOrigin::Collective }
    }
}

/// Local proposals followed by one proposal per collective detection, in input
/// order. Duplicates are kept; the second stage arbitrates.
pub fn inject_proposals(local: &[Proposal], collective: &[Detection]) -> Vec<Proposal> {
    local.iter().copied().chain(collective.iter().map(Proposal::collective)).collect()
}
