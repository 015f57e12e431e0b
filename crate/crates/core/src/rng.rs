//! Counter-style random streams keyed by (seed, channel, network, agent, round).
//!
//! Every draw in the simulator comes from a fresh generator built from its key,
//! so the values an agent sees in a round do not depend on execution order or
//! on how many workers run the round.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct channels never share key space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Oracle = 1,
    Init = 2,
    Bounds = 3,
    MonteCarlo = 4,
}

/// Key of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub channel: Channel,
    /// 1 or 2 for the two networks, 0 when not agent-specific.
    pub network: u8,
    pub agent: u32,
    pub round: u64,
}

impl StreamKey {
    pub fn oracle(seed: u64, network: u8, agent: usize, round: u64) -> Self {
        Self {
            seed,
            channel: Channel::Oracle,
            network,
            agent: agent as u32,
            round,
        }
    }

    pub fn init(seed: u64, network: u8, agent: usize) -> Self {
        Self {
            seed,
            channel: Channel::Init,
            network,
            agent: agent as u32,
            round: 0,
        }
    }

    pub fn plain(seed: u64, channel: Channel) -> Self {
        Self {
            seed,
            channel,
            network: 0,
            agent: 0,
            round: 0,
        }
    }

    /// 256-bit generator seed derived by a SplitMix64 chain over the key words.
    pub fn derive_seed(&self) -> [u8; 32] {
        let words = [
            self.seed,
            ((self.channel as u64) << 40) | ((self.network as u64) << 32) | self.agent as u64,
            self.round,
        ];
        let mut state = 0x6a09_e667_f3bc_c908u64;
        for w in words {
            state = splitmix64(state ^ w);
        }
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        out
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.derive_seed())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
