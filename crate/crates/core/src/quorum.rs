//! Quorum arithmetic and certificate formation.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::CoreError;
use crate::types::{vote_subject, NodeId, QuorumCertificate, Vote};

/// Byzantine tolerance `f` for `n = 3f + 1`.
pub fn fault_tolerance(n: usize) -> Result<usize, CoreError> {
    if n < 4 || (n - 1) % 3 != 0 {
        return Err(CoreError::MalformedClusterSize(n));
    }
    Ok((n - 1) / 3)
}

/// `2f + 1` for a cluster of `n = 3f + 1` nodes.
pub fn quorum_threshold(n: usize) -> Result<usize, CoreError> {
    Ok(2 * fault_tolerance(n)? + 1)
}

/// Builds an aggregated certificate from matching votes.
pub fn form_qc(votes: &[Vote], n: usize) -> Result<QuorumCertificate, CoreError> {
    form_qc_with(votes, n, true)
}

/// Builds a certificate from matching votes. Duplicate voters count once;
/// the certificate keeps the `2f + 1` lowest voter ids.
pub fn form_qc_with(
    votes: &[Vote],
    n: usize,
    aggregated: bool,
) -> Result<QuorumCertificate, CoreError> {
    let need = quorum_threshold(n)?;
    let Some(first) = votes.first() else {
        return Err(CoreError::InsufficientVotes { have: 0, need });
    };
    let mut distinct = BTreeMap::new();
    for v in votes {
        if (v.block_id, v.view, v.phase) != (first.block_id, first.view, first.phase) {
            return Err(CoreError::MixedSubjects);
        }
        if !v.token_valid() {
            return Err(CoreError::BadSignatureToken(v.voter));
        }
        distinct.entry(v.voter).or_insert(v.sig);
    }
    if distinct.len() < need {
        return Err(CoreError::InsufficientVotes {
            have: distinct.len(),
            need,
        });
    }
    Ok(QuorumCertificate {
        block_id: first.block_id,
        view: first.view,
        phase: first.phase,
        tokens: distinct.into_values().take(need).collect(),
        aggregated,
    })
}

/// Receiver-side check: exactly `2f + 1` distinct in-range signers whose
/// tokens all sign this certificate's subject. The genesis certificate is
/// accepted as-is.
pub fn verify_qc(qc: &QuorumCertificate, n: usize) -> bool {
    let Ok(need) = quorum_threshold(n) else {
        return false;
    };
    let subject = vote_subject(&qc.block_id, qc.view, qc.phase);
    if qc.is_genesis() {
        return qc.tokens.len() == n && signers_ok(qc, n, subject);
    }
    qc.tokens.len() == need && signers_ok(qc, n, subject)
}

fn signers_ok(qc: &QuorumCertificate, n: usize, subject: crate::types::Digest32) -> bool {
    let mut seen = vec![false; n];
    for t in &qc.tokens {
        let i = t.signer.index();
        if i >= n || seen[i] || t.subject != subject {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// Total order on certificates: higher view wins, equal views fall back to
/// the lexicographically smaller block id.
pub fn qc_rank(a: &QuorumCertificate, b: &QuorumCertificate) -> Ordering {
    a.view
        .cmp(&b.view)
        .then_with(|| b.block_id.cmp(&a.block_id))
}

pub fn highest_qc<'a>(a: &'a QuorumCertificate, b: &'a QuorumCertificate) -> &'a QuorumCertificate {
    if qc_rank(b, a) == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Whether `signers` includes at least `f + 1` members outside `corrupt`.
pub fn has_correct_majority(
    signers: impl IntoIterator<Item = NodeId>,
    corrupt: &[NodeId],
    f: usize,
) -> bool {
    signers.into_iter().filter(|s| !corrupt.contains(s)).count() > f
}
