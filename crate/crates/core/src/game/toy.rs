use super::{ConcurrentGame, Distribution, Player};

/// Three-state game with one hidden P1 action.
///
/// From `s0` P1 chooses `x` (known to P2) or `h` (hidden) while P2 picks
/// `l` or `r`; `W` is P1's target and `L` is P2's. Returns the game and the
/// hidden action indices.
pub fn toy_deception_game(discount: f64) -> (ConcurrentGame, Vec<usize>) {
    let mut g = ConcurrentGame::new(
        vec!["s0".into(), "W".into(), "L".into()],
        vec!["x".into(), "h".into()],
        vec!["l".into(), "r".into()],
        0,
        discount,
    );
    const S0: usize = 0;
    const W: usize = 1;
    const L: usize = 2;
    let rows = [
        (0, 0, [0.10, 0.30, 0.60]),
        (0, 1, [0.30, 0.10, 0.60]),
        (1, 0, [0.30, 0.00, 0.70]),
        (1, 1, [0.35, 0.05, 0.60]),
    ];
    for (a, b, [w, l, stay]) in rows {
        let entries = [(W, w), (L, l), (S0, stay)].into_iter().filter(|e| e.1 > 0.0).collect();
        g.set_transition(S0, a, b, Distribution::new(entries));
    }
    g.make_absorbing(W);
    g.make_absorbing(L);
    g.set_target(Player::One, W, true);
    g.set_target(Player::Two, L, true);
    (g, vec![1])
}
