//! GoalGrid: a deterministic pixel gridworld with color-token tasks.
//!
//! The agent walks an NxN grid holding one colored target cell per roster
//! color; the active task names the color to reach. Observations are rendered
//! C x H x W images in [0, 1] with nearest-pixel cell blocks, so rendering is
//! injective in the agent position for fixed targets. Steps are indexed from
//! 1. Dense reward is 1 - manhattan(agent, target) / (2 * (side - 1)) plus a
//! +1 bonus on success, bounded in [0, 2]; sparse reward is the success
//! indicator alone.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numcore::{seed_rng, Tensor};
use crate::oracle::TabularMDP;
use crate::{Error, Result};

pub const N_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn from_index(i: usize) -> Result<Action> {
        Action::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArg(format!("action index {i} out of range 0..{N_ACTIONS}")))
    }

    /// (row delta, col delta); row 0 is the top.
    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardMode {
    Dense,
    Sparse,
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub side: usize,
    pub image_side: usize,
    /// Color-token roster; one target cell is placed per entry.
    pub tasks: Vec<String>,
    pub max_steps: u64,
    pub reward_mode: RewardMode,
    pub sparse_period: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            side: 9,
            image_side: 24,
            tasks: vec!["red".into(), "green".into(), "blue".into()],
            max_steps: 256,
            reward_mode: RewardMode::Dense,
            sparse_period: 64,
        }
    }
}

fn color_rgb(name: &str) -> Result<[f32; 3]> {
    match name {
        "red" => Ok([0.9, 0.1, 0.1]),
        "green" => Ok([0.1, 0.9, 0.1]),
        "blue" => Ok([0.1, 0.1, 0.9]),
        "yellow" => Ok([0.9, 0.9, 0.1]),
        "magenta" => Ok([0.9, 0.1, 0.9]),
        "cyan" => Ok([0.1, 0.9, 0.9]),
        other => Err(Error::UnknownTask(other.to_string())),
    }
}

const BACKGROUND: [f32; 3] = [0.05, 0.05, 0.05];

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::Config(format!("grid side must be >= 2, got {}", self.side)));
        }
        if self.image_side < self.side {
            return Err(Error::Config(format!(
                "image side {} smaller than grid side {}; cells would vanish",
                self.image_side, self.side
            )));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("task roster is empty".into()));
        }
        for t in &self.tasks {
            color_rgb(t)?;
        }
        let mut sorted = self.tasks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.tasks.len() {
            return Err(Error::Config("task roster has duplicate colors".into()));
        }
        if self.tasks.len() + 1 > self.side * self.side {
            return Err(Error::Config("more targets than grid cells".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        if self.sparse_period == 0 {
            return Err(Error::Config("sparse_period must be >= 1".into()));
        }
        Ok(())
    }

    pub fn task_id(&self, name: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        [3, self.image_side, self.image_side]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridState {
    pub agent: (usize, usize),
    /// One target cell per roster color, same order as the config roster.
    pub targets: Vec<(usize, usize)>,
    /// Active task token id (index into the roster).
    pub task: usize,
    /// Steps taken so far; the first step moves this to 1.
    pub t: u64,
    pub done: bool,
}

impl GridState {
    pub fn active_target(&self) -> (usize, usize) {
        self.targets[self.task]
    }
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> u64 {
    (a.0.abs_diff(b.0) + a.1.abs_diff(b.1)) as u64
}

/// Place targets (distinct cells) and the agent (anywhere but the active
/// target) from the given RNG.
pub fn env_reset(cfg: &GridConfig, task: usize, rng: &mut ChaCha8Rng) -> Result<GridState> {
    cfg.validate()?;
    if task >= cfg.tasks.len() {
        return Err(Error::InvalidArg(format!(
            "task id {task} out of range for roster of {}",
            cfg.tasks.len()
        )));
    }
    let mut targets: Vec<(usize, usize)> = Vec::with_capacity(cfg.tasks.len());
    while targets.len() < cfg.tasks.len() {
        let cell = (rng.gen_range(0..cfg.side), rng.gen_range(0..cfg.side));
        if !targets.contains(&cell) {
            targets.push(cell);
        }
    }
    let active = targets[task];
    let agent = loop {
        let cell = (rng.gen_range(0..cfg.side), rng.gen_range(0..cfg.side));
        if cell != active {
            break cell;
        }
    };
    Ok(GridState {
        agent,
        targets,
        task,
        t: 0,
        done: false,
    })
}

fn dense_reward(cfg: &GridConfig, next_pos: (usize, usize), target: (usize, usize), success: bool) -> f32 {
    let norm = (2 * (cfg.side - 1)) as f32;
    let base = 1.0 - manhattan(next_pos, target) as f32 / norm;
    base + if success { 1.0 } else { 0.0 }
}

/// One transition. Moves clamp at the border; success means arriving on the
/// active target, which also ends the episode (as does the step cap).
pub fn env_step(cfg: &GridConfig, state: &GridState, action: Action) -> Result<(GridState, f32, bool)> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    let (dr, dc) = action.delta();
    let clamp = |x: usize, d: isize| -> usize {
        let moved = x as isize + d;
        moved.clamp(0, cfg.side as isize - 1) as usize
    };
    let next_pos = (clamp(state.agent.0, dr), clamp(state.agent.1, dc));
    let target = state.active_target();
    let success = next_pos == target;
    let t = state.t + 1;
    let done = success || t >= cfg.max_steps;
    let reward = match cfg.reward_mode {
        RewardMode::Dense => dense_reward(cfg, next_pos, target, success),
        // The periodic zero emissions of sparse mode coincide with the
        // always-zero non-success reward, so only success pays.
        RewardMode::Sparse => {
            if success {
                1.0
            } else {
                0.0
            }
        }
    };
    let next = GridState {
        agent: next_pos,
        targets: state.targets.clone(),
        task: state.task,
        t,
        done,
    };
    Ok((next, reward, done))
}

/// Render to a [3, image_side, image_side] tensor in [0, 1]. Targets are
/// solid color blocks; the agent is blended half toward white over whatever
/// it stands on, so agent-on-target frames stay distinguishable.
pub fn render(cfg: &GridConfig, state: &GridState) -> Result<Tensor> {
    let img = cfg.image_side;
    let mut data = vec![0.0f32; 3 * img * img];
    let cell_of = |p: usize| p * cfg.side / img;
    for y in 0..img {
        let row = cell_of(y);
        for x in 0..img {
            let col = cell_of(x);
            let mut rgb = BACKGROUND;
            for (i, &tcell) in state.targets.iter().enumerate() {
                if tcell == (row, col) {
                    rgb = color_rgb(&cfg.tasks[i])?;
                }
            }
            if state.agent == (row, col) {
                for c in rgb.iter_mut() {
                    *c = 0.5 * *c + 0.5;
                }
            }
            for c in 0..3 {
                data[c * img * img + y * img + x] = rgb[c];
            }
        }
    }
    Tensor::new(vec![3, img, img], data)
}

/// Greedy manhattan-reducing policy; horizontal movement breaks ties when
/// both displacements are nonzero. At the target it stays put.
pub fn scripted_expert(state: &GridState) -> Action {
    let (ar, ac) = state.agent;
    let (tr, tc) = state.active_target();
    if ac != tc {
        if tc > ac {
            Action::Right
        } else {
            Action::Left
        }
    } else if ar != tr {
        if tr > ar {
            Action::Down
        } else {
            Action::Up
        }
    } else {
        Action::Stay
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertEpisode {
    pub task: usize,
    /// Rendered observations o_0 (reset) through o_T.
    pub frames: Vec<Tensor>,
    /// Per frame: agent on the active target in that frame.
    pub success: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertDataset {
    pub frame_shape: [usize; 3],
    pub episodes: Vec<ExpertEpisode>,
}

impl ExpertDataset {
    pub fn n_frames(&self) -> usize {
        self.episodes.iter().map(|e| e.frames.len()).sum()
    }
}

/// Run the scripted expert `n_per_task` times per roster task. An expert
/// episode takes exactly manhattan(start, target) steps, so it holds
/// distance + 1 frames and only the last is a success frame.
pub fn collect_expert_videos(cfg: &GridConfig, n_per_task: usize, seed: u64) -> Result<ExpertDataset> {
    cfg.validate()?;
    if n_per_task == 0 {
        return Err(Error::InvalidArg("n_per_task must be >= 1".into()));
    }
    let mut rng = seed_rng(seed, "collect-expert");
    let mut episodes = Vec::with_capacity(n_per_task * cfg.tasks.len());
    for task in 0..cfg.tasks.len() {
        for _ in 0..n_per_task {
            let mut state = env_reset(cfg, task, &mut rng)?;
            let mut frames = vec![render(cfg, &state)?];
            let mut success = vec![state.agent == state.active_target()];
            while !state.done {
                let action = scripted_expert(&state);
                let (next, _r, _done) = env_step(cfg, &state, action)?;
                frames.push(render(cfg, &next)?);
                success.push(next.agent == next.active_target());
                state = next;
            }
            episodes.push(ExpertEpisode {
                task,
                frames,
                success,
            });
        }
    }
    Ok(ExpertDataset {
        frame_shape: cfg.frame_shape(),
        episodes,
    })
}

// ---------------------------------------------------------------------------
// EXP1 on-disk format: magic "EXP1"; u32 C, H, W; u32 episode count; then per
// episode u32 task id, u32 frame count, frames as f32 C*H*W little-endian
// blocks, and one success byte per frame.
// ---------------------------------------------------------------------------

pub const EXP1_MAGIC: &[u8; 4] = b"EXP1";

pub fn save_expert_dataset(path: &Path, ds: &ExpertDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(EXP1_MAGIC).map_err(io_err)?;
    for d in ds.frame_shape {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&(ds.episodes.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    let frame_len: usize = ds.frame_shape.iter().product();
    for ep in &ds.episodes {
        w.write_all(&(ep.task as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(ep.frames.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        if ep.frames.len() != ep.success.len() {
            return Err(Error::InvalidArg(
                "episode frame and success-flag counts differ".into(),
            ));
        }
        for f in &ep.frames {
            if f.len() != frame_len {
                return Err(Error::ShapeMismatch {
                    op: "save_expert_dataset",
                    expected: format!("{:?}", ds.frame_shape),
                    got: format!("{:?}", f.shape()),
                });
            }
            for &v in f.data() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        let flags: Vec<u8> = ep.success.iter().map(|&s| s as u8).collect();
        w.write_all(&flags).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_expert_dataset(path: &Path) -> Result<ExpertDataset> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != EXP1_MAGIC {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("bad magic {magic:?}, want {EXP1_MAGIC:?}"),
        });
    }
    let read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(u32::from_le_bytes(b))
    };
    let c = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let n_episodes = read_u32(&mut r)? as usize;
    let frame_len = c * h * w;
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let task = read_u32(&mut r)? as usize;
        let n_frames = read_u32(&mut r)? as usize;
        let mut frames = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let mut payload = vec![0u8; frame_len * 4];
            r.read_exact(&mut payload).map_err(io_err)?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            frames.push(Tensor::new(vec![c, h, w], data)?);
        }
        let mut flags = vec![0u8; n_frames];
        r.read_exact(&mut flags).map_err(io_err)?;
        episodes.push(ExpertEpisode {
            task,
            frames,
            success: flags.into_iter().map(|b| b != 0).collect(),
        });
    }
    Ok(ExpertDataset {
        frame_shape: [c, h, w],
        episodes,
    })
}

/// Export the grid as an exact finite MDP for the given task: states are
/// cells (targets fixed by `seed` through the same placement as `env_reset`),
/// the active target is absorbing with zero reward, and R[s][a] matches
/// `env_step` (for sparse mode, its success-only component; the periodic
/// emission schedule is time-dependent and not part of a stationary table).
pub fn tabular_from_grid(cfg: &GridConfig, task: &str, gamma: f64, seed: u64) -> Result<TabularMDP> {
    cfg.validate()?;
    let task_id = cfg.task_id(task)?;
    let mut rng = seed_rng(seed, "tabular-targets");
    let placement = env_reset(cfg, task_id, &mut rng)?;
    let target = placement.active_target();
    let n = cfg.side * cfg.side;
    let goal = target.0 * cfg.side + target.1;
    let mut p = vec![0.0f64; n * N_ACTIONS * n];
    let mut r = vec![0.0f64; n * N_ACTIONS];
    for row in 0..cfg.side {
        for col in 0..cfg.side {
            let s = row * cfg.side + col;
            for action in Action::ALL {
                let a = action.index();
                let (next, reward) = if s == goal {
                    (s, 0.0)
                } else {
                    let (dr, dc) = action.delta();
                    let nr = (row as isize + dr).clamp(0, cfg.side as isize - 1) as usize;
                    let nc = (col as isize + dc).clamp(0, cfg.side as isize - 1) as usize;
                    let pos = (nr, nc);
                    let success = pos == target;
                    let reward = match cfg.reward_mode {
                        RewardMode::Dense => dense_reward(cfg, pos, target, success) as f64,
                        RewardMode::Sparse => {
                            if success {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    (nr * cfg.side + nc, reward)
                };
                p[(s * N_ACTIONS + a) * n + next] = 1.0;
                r[s * N_ACTIONS + a] = reward;
            }
        }
    }
    TabularMDP::new(n, N_ACTIONS, p, r, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(side: usize) -> GridConfig {
        GridConfig {
            side,
            image_side: (side * 3).max(side),
            tasks: vec!["red".into()],
            max_steps: 64,
            reward_mode: RewardMode::Dense,
            sparse_period: 16,
        }
    }

    fn state_at(cfg: &GridConfig, agent: (usize, usize), target: (usize, usize)) -> GridState {
        let _ = cfg;
        GridState {
            agent,
            targets: vec![target],
            task: 0,
            t: 0,
            done: false,
        }
    }

    #[test]
    fn reset_is_seeded_and_avoids_the_active_target() {
        let cfg = GridConfig::default();
        for seed in 0..50u64 {
            let mut r1 = seed_rng(seed, "reset");
            let mut r2 = seed_rng(seed, "reset");
            let a = env_reset(&cfg, 0, &mut r1).unwrap();
            let b = env_reset(&cfg, 0, &mut r2).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.agent, a.active_target());
            let mut cells = a.targets.clone();
            cells.sort();
            cells.dedup();
            assert_eq!(cells.len(), a.targets.len(), "targets collide");
        }
    }

    #[test]
    fn moves_clamp_at_the_border() {
        let cfg = small_cfg(3);
        let s = state_at(&cfg, (0, 0), (2, 2));
        let (next, _, _) = env_step(&cfg, &s, Action::Up).unwrap();
        assert_eq!(next.agent, (0, 0));
        let (next, _, _) = env_step(&cfg, &s, Action::Left).unwrap();
        assert_eq!(next.agent, (0, 0));
        let (next, _, _) = env_step(&cfg, &s, Action::Down).unwrap();
        assert_eq!(next.agent, (1, 0));
    }

    #[test]
    fn arrival_pays_distance_term_plus_bonus() {
        // Adjacent left of the target, stepping Right: distance 0 -> 1.0,
        // bonus 1.0, total 2.0, episode done.
        let cfg = small_cfg(5);
        let s = state_at(&cfg, (2, 1), (2, 2));
        let (next, r, done) = env_step(&cfg, &s, Action::Right).unwrap();
        assert_eq!(r, 2.0);
        assert!(done && next.done);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn dense_reward_tracks_next_distance() {
        let cfg = small_cfg(5);
        let s = state_at(&cfg, (0, 0), (4, 4));
        // Stay keeps distance 8 = 2*(side-1): reward 0.
        let (_, r, _) = env_step(&cfg, &s, Action::Stay).unwrap();
        assert_eq!(r, 0.0);
        // Down reduces distance to 7: reward 1 - 7/8.
        let (_, r, _) = env_step(&cfg, &s, Action::Down).unwrap();
        assert!((r - (1.0 - 7.0 / 8.0)).abs() < 1e-6);
    }

    #[test]
    fn sparse_mode_pays_only_on_success() {
        let mut cfg = small_cfg(5);
        cfg.reward_mode = RewardMode::Sparse;
        let s = state_at(&cfg, (2, 1), (2, 2));
        let (_, r, _) = env_step(&cfg, &s, Action::Left).unwrap();
        assert_eq!(r, 0.0);
        let (_, r, done) = env_step(&cfg, &s, Action::Right).unwrap();
        assert_eq!(r, 1.0);
        assert!(done);
    }

    #[test]
    fn step_cap_finishes_the_episode() {
        let mut cfg = small_cfg(3);
        cfg.max_steps = 2;
        let mut s = state_at(&cfg, (0, 0), (2, 2));
        let (next, _, done) = env_step(&cfg, &s, Action::Stay).unwrap();
        assert!(!done);
        s = next;
        let (next, _, done) = env_step(&cfg, &s, Action::Stay).unwrap();
        assert!(done && next.t == 2);
        assert!(env_step(&cfg, &next, Action::Stay).is_err());
    }

    #[test]
    fn render_shape_range_and_injectivity() {
        let cfg = small_cfg(3);
        let mut images = Vec::new();
        for row in 0..3 {
            for col in 0..3 {
                if (row, col) == (2, 2) {
                    continue;
                }
                let img = render(&cfg, &state_at(&cfg, (row, col), (2, 2))).unwrap();
                assert_eq!(img.shape(), &[3, 9, 9]);
                assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
                images.push(img);
            }
        }
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                assert_ne!(images[i], images[j], "positions {i} and {j} render equal");
            }
        }
    }

    #[test]
    fn render_works_when_image_side_not_divisible_by_grid() {
        let cfg = GridConfig {
            side: 9,
            image_side: 24,
            ..GridConfig::default()
        };
        let mut rng = seed_rng(1, "render");
        let s = env_reset(&cfg, 0, &mut rng).unwrap();
        let img = render(&cfg, &s).unwrap();
        assert_eq!(img.shape(), &[3, 24, 24]);
    }

    #[test]
    fn expert_reaches_in_exactly_manhattan_steps() {
        // (0,0) to (2,2) on 3x3: 4 steps, horizontal first.
        let cfg = small_cfg(3);
        let mut s = state_at(&cfg, (0, 0), (2, 2));
        let mut path = Vec::new();
        while !s.done {
            let a = scripted_expert(&s);
            path.push(a);
            let (next, _, _) = env_step(&cfg, &s, a).unwrap();
            s = next;
        }
        assert_eq!(path.len(), 4);
        assert_eq!(
            path,
            vec![Action::Right, Action::Right, Action::Down, Action::Down]
        );
    }

    #[test]
    fn expert_episode_has_distance_plus_one_frames() {
        let cfg = small_cfg(4);
        let ds = collect_expert_videos(&cfg, 5, 77).unwrap();
        for ep in &ds.episodes {
            let first = &ep.frames[0];
            assert_eq!(first.shape(), &[3, 12, 12]);
            // Success flags: exactly the final frame.
            let n = ep.frames.len();
            assert_eq!(ep.success.len(), n);
            assert!(ep.success[n - 1]);
            assert!(ep.success[..n - 1].iter().all(|&s| !s));
            assert!(n >= 2, "expert never starts on the target");
        }
        assert_eq!(ds.episodes.len(), 5);
    }

    #[test]
    fn collect_is_deterministic_per_seed() {
        let cfg = small_cfg(3);
        let a = collect_expert_videos(&cfg, 3, 5).unwrap();
        let b = collect_expert_videos(&cfg, 3, 5).unwrap();
        assert_eq!(a, b);
        let c = collect_expert_videos(&cfg, 3, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exp1_roundtrips() {
        let cfg = small_cfg(3);
        let ds = collect_expert_videos(&cfg, 2, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.exp1");
        save_expert_dataset(&path, &ds).unwrap();
        let back = load_expert_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn tabular_export_of_2x2_grid() {
        let cfg = GridConfig {
            side: 2,
            image_side: 4,
            tasks: vec!["red".into()],
            ..GridConfig::default()
        };
        let mdp = tabular_from_grid(&cfg, "red", 0.9, 0).unwrap();
        assert_eq!(mdp.n_states, 4);
        assert_eq!(mdp.n_actions, 5);
        // Every row is a deterministic distribution.
        for s in 0..4 {
            for a in 0..5 {
                let row = mdp.p_row(s, a);
                assert_eq!(row.iter().sum::<f64>(), 1.0);
                assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            }
        }
    }

    #[test]
    fn tabular_transitions_agree_with_env_step_exhaustively() {
        let cfg = small_cfg(4);
        let seed = 3;
        let mdp = tabular_from_grid(&cfg, "red", 0.9, seed).unwrap();
        let mut rng = seed_rng(seed, "tabular-targets");
        let placement = env_reset(&cfg, 0, &mut rng).unwrap();
        let target = placement.active_target();
        let goal = target.0 * cfg.side + target.1;
        for row in 0..cfg.side {
            for col in 0..cfg.side {
                let s = row * cfg.side + col;
                for action in Action::ALL {
                    let a = action.index();
                    let prow = mdp.p_row(s, a);
                    let next_idx = prow.iter().position(|&x| x == 1.0).unwrap();
                    if s == goal {
                        assert_eq!(next_idx, s, "goal must be absorbing");
                        assert_eq!(mdp.reward(s, a), 0.0);
                    } else {
                        let st = GridState {
                            agent: (row, col),
                            targets: placement.targets.clone(),
                            task: 0,
                            t: 0,
                            done: false,
                        };
                        let (next, r, _) = env_step(&cfg, &st, action).unwrap();
                        assert_eq!(next_idx, next.agent.0 * cfg.side + next.agent.1);
                        assert!((mdp.reward(s, a) - r as f64).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation_catches_bad_rosters() {
        let mut cfg = GridConfig::default();
        cfg.tasks = vec!["chartreuse".into()];
        assert!(cfg.validate().is_err());
        cfg.tasks = vec!["red".into(), "red".into()];
        assert!(cfg.validate().is_err());
        cfg.tasks = vec![];
        assert!(cfg.validate().is_err());
    }
}
