//! Negotiation game state, folded over the utterance history.
//!
//! Seat 0 always opens, so the speaker of turn `t` sits at `t % 2`. The
//! partner's disposition (`mood`) toward seat 0 is latent: it moves with seat
//! 0's rapport and hostility and with completed information exchanges, and it
//! sets how many units the partner demands.

use crate::episode::{ActionToken, Utterance};

/// Disposition at or above which the partner demands only its reservation.
pub const WARM_MOOD: i32 = 2;
pub const MOOD_CAP: i32 = 3;
/// Disposition at or below which the partner walks away.
pub const WALKOUT_MOOD: i32 = -3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offer {
    pub proposer: usize,
    /// Units the proposer takes.
    pub units: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegotiationState {
    pub resource_units: u32,
    pub turns: usize,
    pub standing: Option<Offer>,
    /// Units going to seat 0, once a deal is struck.
    pub agreement: Option<u32>,
    pub left_by: Option<usize>,
    pub mood: i32,
    /// Seat 0 rejections of partner offers; the partner concedes one unit each.
    pub rejections: u32,
    pub exchanges: u32,
    pub rapport: [u32; 2],
    pub hostile: [u32; 2],
    pub counts: [[u32; 9]; 2],
    pub last: Option<(usize, ActionToken)>,
}

pub fn seat_of_turn(turn: usize) -> usize {
    turn % 2
}

impl NegotiationState {
    pub fn new(resource_units: u32) -> Self {
        Self {
            resource_units,
            turns: 0,
            standing: None,
            agreement: None,
            left_by: None,
            mood: 0,
            rejections: 0,
            exchanges: 0,
            rapport: [0; 2],
            hostile: [0; 2],
            counts: [[0; 9]; 2],
            last: None,
        }
    }

    pub fn from_history(resource_units: u32, history: &[Utterance]) -> Self {
        let mut state = Self::new(resource_units);
        for u in history {
            state.apply(u.action_token);
        }
        state
    }

    pub fn from_tokens(resource_units: u32, tokens: impl IntoIterator<Item = ActionToken>) -> Self {
        let mut state = Self::new(resource_units);
        for t in tokens {
            state.apply(t);
        }
        state
    }

    /// Seat of the next speaker.
    pub fn to_move(&self) -> usize {
        seat_of_turn(self.turns)
    }

    pub fn is_terminal(&self) -> bool {
        self.agreement.is_some() || self.left_by.is_some()
    }

    /// Units for `seat` under the agreement, if any.
    pub fn units_for(&self, seat: usize) -> Option<u32> {
        self.agreement
            .map(|u| if seat == 0 { u } else { self.resource_units - u })
    }

    /// Standing offer made by the other side, as units that would go to `seat`.
    pub fn offer_to(&self, seat: usize) -> Option<u32> {
        self.standing
            .filter(|o| o.proposer != seat)
            .map(|o| self.resource_units.saturating_sub(o.units))
    }

    fn bump_mood(&mut self, delta: i32) {
        self.mood = (self.mood + delta).min(MOOD_CAP);
    }

    /// Applies the next utterance (spoken by `self.to_move()`).
    pub fn apply(&mut self, token: ActionToken) {
        let seat = self.to_move();
        let other = 1 - seat;
        let pending_ask = matches!(self.last, Some((s, ActionToken::AskInfo)) if s == other);
        self.counts[seat][token.class().index()] += 1;
        match token {
            ActionToken::Propose(k) => {
                self.standing = Some(Offer {
                    proposer: seat,
                    units: k.min(self.resource_units),
                });
            }
            ActionToken::Accept => {
                if let Some(offer) = self.standing.filter(|o| o.proposer == other) {
                    let to_seat0 = if offer.proposer == 0 {
                        offer.units
                    } else {
                        self.resource_units - offer.units
                    };
                    self.agreement = Some(to_seat0);
                }
            }
            ActionToken::Reject => {
                if self.standing.is_some_and(|o| o.proposer == other) {
                    self.standing = None;
                    if seat == 0 {
                        self.rejections += 1;
                    }
                }
            }
            ActionToken::Rapport => {
                self.rapport[seat] += 1;
                if seat == 0 {
                    self.bump_mood(1);
                }
            }
            ActionToken::Hostile => {
                self.hostile[seat] += 1;
                if seat == 0 {
                    self.bump_mood(-2);
                }
            }
            ActionToken::ShareInfo => {
                if pending_ask {
                    self.exchanges += 1;
                    self.bump_mood(1);
                }
            }
            ActionToken::Leave => self.left_by = Some(seat),
            ActionToken::AskInfo | ActionToken::Pass => {}
        }
        self.last = Some((seat, token));
        self.turns += 1;
    }

    /// Units the partner (seat 1) insists on keeping.
    pub fn partner_demand(&self, reservation: u32) -> u32 {
        let penalty = (WARM_MOOD - self.mood).max(0) as u32;
        (reservation + penalty).min(self.resource_units)
    }

    /// Units the partner asks for in its own proposals, after concessions.
    pub fn partner_ask(&self, reservation: u32) -> u32 {
        let demand = self.partner_demand(reservation);
        let opening = (demand + 2).min(self.resource_units);
        opening.saturating_sub(self.rejections).max(demand)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActionToken::*;

    #[test]
    fn accepting_the_other_sides_offer_makes_a_deal() {
        let s = NegotiationState::from_tokens(10, [Propose(6), Accept]);
        assert_eq!(s.agreement, Some(6));
        assert_eq!(s.units_for(1), Some(4));

        let s = NegotiationState::from_tokens(10, [Pass, Propose(7), Accept]);
        assert_eq!(s.agreement, Some(3));
    }

    #[test]
    fn accept_without_offer_is_a_no_op() {
        let s = NegotiationState::from_tokens(10, [Accept, Pass]);
        assert!(s.agreement.is_none());
        // Accepting one's own standing proposal does nothing either.
        let s = NegotiationState::from_tokens(10, [Propose(5), Pass, Accept]);
        assert!(s.agreement.is_none());
    }

    #[test]
    fn mood_tracks_rapport_hostility_and_exchanges() {
        let s = NegotiationState::from_tokens(10, [Rapport, Pass, Rapport]);
        assert_eq!(s.mood, 2);
        assert_eq!(s.partner_demand(4), 4);
        let s = NegotiationState::from_tokens(10, [Hostile]);
        assert_eq!(s.mood, -2);
        assert_eq!(s.partner_demand(4), 8);
        let s = NegotiationState::from_tokens(10, [AskInfo, ShareInfo]);
        assert_eq!((s.exchanges, s.mood), (1, 1));
        // Non-adjacent share does not complete an exchange.
        let s = NegotiationState::from_tokens(10, [AskInfo, Pass, ShareInfo]);
        assert_eq!(s.exchanges, 0);
        let s = NegotiationState::from_tokens(10, [Rapport, Pass, Rapport, Pass, Rapport, Pass, Rapport]);
        assert_eq!(s.mood, MOOD_CAP);
    }

    #[test]
    fn partner_concedes_after_rejections() {
        let base = NegotiationState::new(10);
        assert_eq!(base.partner_ask(4), 8);
        let s = NegotiationState::from_tokens(10, [Pass, Propose(8), Reject, Propose(7), Reject]);
        assert_eq!(s.rejections, 2);
        assert_eq!(s.partner_ask(4), 6);
    }
}
