//! Run configuration: `[section]` headers, `key = value` lines, `#` comments,
//! arrays as comma-separated lists. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::asl::{TfmConfig, VemSchedule};
use crate::ddqn::DdqnConfig;
use crate::error::{Error, Result};
use crate::net::AdamConfig;
use crate::sim::{DiversityRanges, EnvConfig, Interval, RandomObstacles, SimParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Every copy on the first training map with nominal parameters.
    Grey,
    /// Copies round-robin over the training maps, parameters within ±fraction.
    Color,
    /// Round-robin maps with explicitly configured ranges.
    Custom,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grey" | "gray" => Ok(Mode::Grey),
            "color" | "colour" => Ok(Mode::Color),
            "custom" => Ok(Mode::Custom),
            _ => Err(Error::Config(format!("unknown mode {s:?} (grey, color, custom)"))),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Grey => "grey",
            Mode::Color => "color",
            Mode::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub max_t_steps: u64,
    pub out_dir: PathBuf,
    pub name: String,

    pub train_maps: Vec<PathBuf>,
    pub heldout_maps: Vec<PathBuf>,

    pub n_envs: usize,
    pub env: EnvConfig,
    pub nominal: SimParams,
    pub diversity_fraction: f64,
    /// Used in custom mode; `None` falls back to ±`diversity_fraction`.
    pub custom_ranges: Option<DiversityRanges>,

    pub tps: f64,
    pub batch_size: usize,
    pub start_threshold: usize,
    pub upload_period: u64,
    pub replay_capacity: usize,
    pub tfm_enabled: bool,
    pub tfm_ema: f64,
    pub tfm_warmup: u64,
    pub max_sleep_s: f64,

    pub vem: VemSchedule,
    pub gamma: f64,
    pub target_sync_period: u64,
    pub learning_rate: f64,

    /// Zero disables periodic evaluation.
    pub eval_every_b_steps: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub metrics_every_s: f64,
    pub episode_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Color,
            seed: 0,
            max_t_steps: 300_000,
            out_dir: PathBuf::from("runs"),
            name: "run".into(),
            train_maps: Vec::new(),
            heldout_maps: Vec::new(),
            n_envs: 16,
            env: EnvConfig::default(),
            nominal: SimParams::default(),
            diversity_fraction: 0.3,
            custom_ranges: None,
            tps: 256.0,
            batch_size: 256,
            start_threshold: 30_000,
            upload_period: 50,
            replay_capacity: 1_000_000,
            tfm_enabled: true,
            tfm_ema: 0.1,
            tfm_warmup: 10,
            max_sleep_s: 1.0,
            vem: VemSchedule::default(),
            gamma: 0.98,
            target_sync_period: 200,
            learning_rate: 1e-4,
            eval_every_b_steps: 5_000,
            eval_episodes: 10,
            eval_seed: 12_345,
            metrics_every_s: 1.0,
            episode_window: 100,
        }
    }
}

/// Raw `[section] key = value` contents, in file order.
#[derive(Debug, Default)]
struct Ini {
    entries: BTreeMap<(String, String), (usize, String)>,
}

impl Ini {
    fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = no + 1;
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section header")))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
            if section.is_empty() {
                return Err(Error::Config(format!("line {lineno}: key outside any section")));
            }
            let key = (section.clone(), k.trim().to_string());
            if ini.entries.insert(key.clone(), (lineno, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {lineno}: duplicate key {}.{}", key.0, key.1)));
            }
        }
        Ok(ini)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str, into: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, v)) = self.take(section, key) {
            *into = v
                .parse()
                .map_err(|e| Error::Config(format!("line {line}: {section}.{key} = {v:?}: {e}")))?;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.take(section, key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::Config(format!("line {line}: {section}.{key} item {s:?}: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn interval(&mut self, section: &str, key: &str) -> Result<Option<Interval>> {
        match self.list::<f64>(section, key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some(Interval { lo: v[0], hi: v[1] })),
            Some(_) => Err(Error::Config(format!("{section}.{key} needs exactly two values `lo, hi`"))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(((s, k), (line, _))) = self.entries.into_iter().min_by_key(|(_, (l, _))| *l) {
            return Err(Error::Config(format!("line {line}: unknown key {s}.{k}")));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses a config; relative map and output paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut ini = Ini::parse(text)?;
        let mut c = RunConfig::default();

        if let Some((line, v)) = ini.take("run", "mode") {
            c.mode = v.parse().map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        ini.get("run", "seed", &mut c.seed)?;
        ini.get("run", "max_t_steps", &mut c.max_t_steps)?;
        ini.get("run", "name", &mut c.name)?;
        ini.get("run", "metrics_every_s", &mut c.metrics_every_s)?;

        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        if let Some((_, v)) = ini.take("run", "out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        c.out_dir = resolve(c.out_dir);
        if let Some(v) = ini.list::<PathBuf>("maps", "train")? {
            c.train_maps = v.into_iter().map(resolve).collect();
        }
        if let Some(v) = ini.list::<PathBuf>("maps", "heldout")? {
            c.heldout_maps = v.into_iter().map(resolve).collect();
        }

        ini.get("env", "n", &mut c.n_envs)?;
        ini.get("env", "timeout_steps", &mut c.env.timeout_steps)?;
        ini.get("env", "robot_radius_cm", &mut c.env.robot_radius_cm)?;
        ini.get("env", "lidar_range_cm", &mut c.env.lidar.max_range_cm)?;
        let mut pd = 0.0;
        ini.get("env", "planning_distance_cm", &mut pd)?;
        if pd > 0.0 {
            c.env.planning_distance_cm = Some(pd);
        }
        ini.get("env", "random_obstacles", &mut c.env.random_obstacles.count)?;
        ini.get("env", "random_obstacle_min_cm", &mut c.env.random_obstacles.min_size_cm)?;
        ini.get("env", "random_obstacle_max_cm", &mut c.env.random_obstacles.max_size_cm)?;

        ini.get("sim", "k", &mut c.nominal.k)?;
        ini.get("sim", "control_interval_s", &mut c.nominal.control_interval_s)?;
        ini.get("sim", "control_delay_steps", &mut c.nominal.control_delay_steps)?;
        ini.get("sim", "v_linear_max_cm_s", &mut c.nominal.v_linear_max_cm_s)?;
        ini.get("sim", "v_angular_max_rad_s", &mut c.nominal.v_angular_max_rad_s)?;
        ini.get("sim", "lidar_noise_std_cm", &mut c.nominal.lidar_noise_std_cm)?;

        ini.get("diversity", "fraction", &mut c.diversity_fraction)?;
        let mut custom = DiversityRanges::around(&c.nominal, c.diversity_fraction);
        let mut any = false;
        for (key, slot) in [
            ("k", &mut custom.k),
            ("control_interval_s", &mut custom.control_interval_s),
            ("v_linear_max_cm_s", &mut custom.v_linear_max_cm_s),
            ("v_angular_max_rad_s", &mut custom.v_angular_max_rad_s),
            ("lidar_noise_std_cm", &mut custom.lidar_noise_std_cm),
        ] {
            if let Some(iv) = ini.interval("diversity", key)? {
                *slot = iv;
                any = true;
            }
        }
        if let Some(v) = ini.list::<usize>("diversity", "control_delay_steps")? {
            if v.len() != 2 {
                return Err(Error::Config("diversity.control_delay_steps needs `lo, hi`".into()));
            }
            custom.control_delay_steps = (v[0], v[1]);
            any = true;
        }
        if any {
            c.custom_ranges = Some(custom);
        }

        ini.get("asl", "tps", &mut c.tps)?;
        ini.get("asl", "batch_size", &mut c.batch_size)?;
        ini.get("asl", "start_threshold", &mut c.start_threshold)?;
        ini.get("asl", "upload_period", &mut c.upload_period)?;
        ini.get("asl", "replay_capacity", &mut c.replay_capacity)?;
        ini.get("asl", "tfm", &mut c.tfm_enabled)?;
        ini.get("asl", "tfm_ema", &mut c.tfm_ema)?;
        ini.get("asl", "tfm_warmup", &mut c.tfm_warmup)?;
        ini.get("asl", "max_sleep_s", &mut c.max_sleep_s)?;

        ini.get("vem", "or_init", &mut c.vem.or_init)?;
        ini.get("vem", "or_final", &mut c.vem.or_final)?;
        ini.get("vem", "decay_steps", &mut c.vem.decay_steps)?;
        ini.get("vem", "e_min", &mut c.vem.e_min)?;
        ini.get("vem", "e_max", &mut c.vem.e_max)?;

        ini.get("ddqn", "gamma", &mut c.gamma)?;
        ini.get("ddqn", "target_sync_period", &mut c.target_sync_period)?;
        ini.get("ddqn", "learning_rate", &mut c.learning_rate)?;

        ini.get("eval", "every_b_steps", &mut c.eval_every_b_steps)?;
        ini.get("eval", "episodes", &mut c.eval_episodes)?;
        ini.get("eval", "seed", &mut c.eval_seed)?;
        ini.get("eval", "episode_window", &mut c.episode_window)?;

        ini.finish()?;
        c.vem.n = c.n_envs;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_envs == 0 {
            return Err(Error::Config("env.n must be at least 1".into()));
        }
        if self.train_maps.is_empty() {
            return Err(Error::Config("maps.train lists no maps".into()));
        }
        if self.upload_period == 0 {
            return Err(Error::Config("asl.upload_period must be positive".into()));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::Config("asl.replay_capacity is smaller than one batch".into()));
        }
        if self.max_t_steps == 0 {
            return Err(Error::Config("run.max_t_steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.diversity_fraction) {
            return Err(Error::Config(format!("diversity.fraction {} outside [0, 1)", self.diversity_fraction)));
        }
        if !(self.max_sleep_s > 0.0) || !(self.metrics_every_s > 0.0) {
            return Err(Error::Config("sleep cap and metrics interval must be positive".into()));
        }
        self.nominal.validate()?;
        self.ranges().validate()?;
        self.tfm().validate()?;
        self.vem.validate()?;
        self.ddqn().validate()?;
        Ok(())
    }

    /// Diversity ranges every copy samples from in this mode.
    pub fn ranges(&self) -> DiversityRanges {
        match self.mode {
            Mode::Grey => DiversityRanges::fixed(&self.nominal),
            Mode::Color => DiversityRanges::around(&self.nominal, self.diversity_fraction),
            Mode::Custom => self
                .custom_ranges
                .clone()
                .unwrap_or_else(|| DiversityRanges::around(&self.nominal, self.diversity_fraction)),
        }
    }

    /// Map index of each copy.
    pub fn assignment(&self, n_maps: usize) -> Vec<usize> {
        match self.mode {
            Mode::Grey => vec![0; self.n_envs],
            Mode::Color | Mode::Custom => (0..self.n_envs).map(|i| i % n_maps).collect(),
        }
    }

    pub fn tfm(&self) -> TfmConfig {
        TfmConfig {
            n: self.n_envs,
            tps: self.tps,
            batch: self.batch_size,
            ema_factor: self.tfm_ema,
            warmup: self.tfm_warmup,
            max_sleep: Duration::from_secs_f64(self.max_sleep_s),
            enabled: self.tfm_enabled,
        }
    }

    pub fn ddqn(&self) -> DdqnConfig {
        DdqnConfig {
            gamma: self.gamma,
            target_sync_period: self.target_sync_period,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.learning_rate,
                ..AdamConfig::default()
            },
        }
    }

    /// Environment settings for copies on map `map_index`. Per-episode random
    /// obstacles go on the first training map only.
    pub fn env_for_map(&self, map_index: usize) -> EnvConfig {
        let mut e = self.env.clone();
        if map_index != 0 {
            e.random_obstacles = RandomObstacles { count: 0, ..e.random_obstacles };
        }
        e
    }

    /// Fully materialized text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "max_t_steps = {}", self.max_t_steps);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "metrics_every_s = {:?}", self.metrics_every_s);
        let _ = writeln!(s, "\n[maps]");
        let _ = writeln!(s, "train = {}", join(&self.train_maps));
        let _ = writeln!(s, "heldout = {}", join(&self.heldout_maps));
        let _ = writeln!(s, "\n[env]");
        let _ = writeln!(s, "n = {}", self.n_envs);
        let _ = writeln!(s, "timeout_steps = {}", self.env.timeout_steps);
        let _ = writeln!(s, "robot_radius_cm = {:?}", self.env.robot_radius_cm);
        let _ = writeln!(s, "lidar_range_cm = {:?}", self.env.lidar.max_range_cm);
        let _ = writeln!(s, "planning_distance_cm = {:?}", self.env.planning_distance_cm.unwrap_or(0.0));
        let _ = writeln!(s, "random_obstacles = {}", self.env.random_obstacles.count);
        let _ = writeln!(s, "random_obstacle_min_cm = {:?}", self.env.random_obstacles.min_size_cm);
        let _ = writeln!(s, "random_obstacle_max_cm = {:?}", self.env.random_obstacles.max_size_cm);
        let n = &self.nominal;
        let _ = writeln!(s, "\n[sim]");
        let _ = writeln!(s, "k = {:?}", n.k);
        let _ = writeln!(s, "control_interval_s = {:?}", n.control_interval_s);
        let _ = writeln!(s, "control_delay_steps = {}", n.control_delay_steps);
        let _ = writeln!(s, "v_linear_max_cm_s = {:?}", n.v_linear_max_cm_s);
        let _ = writeln!(s, "v_angular_max_rad_s = {:?}", n.v_angular_max_rad_s);
        let _ = writeln!(s, "lidar_noise_std_cm = {:?}", n.lidar_noise_std_cm);
        let _ = writeln!(s, "\n[diversity]");
        let _ = writeln!(s, "fraction = {:?}", self.diversity_fraction);
        if let Some(r) = &self.custom_ranges {
            let iv = |i: &Interval| format!("{:?}, {:?}", i.lo, i.hi);
            let _ = writeln!(s, "k = {}", iv(&r.k));
            let _ = writeln!(s, "control_interval_s = {}", iv(&r.control_interval_s));
            let _ = writeln!(s, "control_delay_steps = {}, {}", r.control_delay_steps.0, r.control_delay_steps.1);
            let _ = writeln!(s, "v_linear_max_cm_s = {}", iv(&r.v_linear_max_cm_s));
            let _ = writeln!(s, "v_angular_max_rad_s = {}", iv(&r.v_angular_max_rad_s));
            let _ = writeln!(s, "lidar_noise_std_cm = {}", iv(&r.lidar_noise_std_cm));
        }
        let _ = writeln!(s, "\n[asl]");
        let _ = writeln!(s, "tps = {:?}", self.tps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "start_threshold = {}", self.start_threshold);
        let _ = writeln!(s, "upload_period = {}", self.upload_period);
        let _ = writeln!(s, "replay_capacity = {}", self.replay_capacity);
        let _ = writeln!(s, "tfm = {}", self.tfm_enabled);
        let _ = writeln!(s, "tfm_ema = {:?}", self.tfm_ema);
        let _ = writeln!(s, "tfm_warmup = {}", self.tfm_warmup);
        let _ = writeln!(s, "max_sleep_s = {:?}", self.max_sleep_s);
        let _ = writeln!(s, "\n[vem]");
        let _ = writeln!(s, "or_init = {}", self.vem.or_init);
        let _ = writeln!(s, "or_final = {}", self.vem.or_final);
        let _ = writeln!(s, "decay_steps = {}", self.vem.decay_steps);
        let _ = writeln!(s, "e_min = {:?}", self.vem.e_min);
        let _ = writeln!(s, "e_max = {:?}", self.vem.e_max);
        let _ = writeln!(s, "\n[ddqn]");
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "target_sync_period = {}", self.target_sync_period);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "\n[eval]");
        let _ = writeln!(s, "every_b_steps = {}", self.eval_every_b_steps);
        let _ = writeln!(s, "episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "seed = {}", self.eval_seed);
        let _ = writeln!(s, "episode_window = {}", self.episode_window);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# comment
[run]
mode = grey
seed = 7
max_t_steps = 1000

[maps]
train = a.txt, b.txt   # trailing comment
heldout = /abs/c.txt

[env]
n = 4
random_obstacles = 3

[vem]
or_init = 4
or_final = 2
";

    #[test]
    fn parses_and_resolves_paths() {
        let c = RunConfig::parse(SAMPLE, Path::new("/base")).unwrap();
        assert_eq!(c.mode, Mode::Grey);
        assert_eq!(c.seed, 7);
        assert_eq!(c.n_envs, 4);
        assert_eq!(c.vem.n, 4);
        assert_eq!(c.train_maps, vec![PathBuf::from("/base/a.txt"), PathBuf::from("/base/b.txt")]);
        assert_eq!(c.heldout_maps, vec![PathBuf::from("/abs/c.txt")]);
        assert_eq!(c.env.random_obstacles.count, 3);
        assert_eq!(c.tps, 256.0);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = format!("{SAMPLE}\n[asl]\nbogus = 1\n");
        let e = RunConfig::parse(&text, Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("asl.bogus"), "{e}");
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for bad in ["[run\nseed = 1", "seed = 1", "[run]\nseed", "[run]\nseed = x", "[run]\nseed = 1\nseed = 2"] {
            assert!(RunConfig::parse(bad, Path::new(".")).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::parse(SAMPLE, Path::new("/base")).unwrap();
        c.mode = Mode::Custom;
        c.custom_ranges = Some(DiversityRanges::around(&c.nominal, 0.1));
        c.env.planning_distance_cm = Some(500.0);
        let back = RunConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn mode_drives_assignment_and_ranges() {
        let mut c = RunConfig::parse(SAMPLE, Path::new("/")).unwrap();
        assert_eq!(c.assignment(3), vec![0; 4]);
        assert!(c.ranges().is_fixed());
        c.mode = Mode::Color;
        assert_eq!(c.assignment(3), vec![0, 1, 2, 0]);
        assert!(!c.ranges().is_fixed());
        assert_eq!(c.env_for_map(0).random_obstacles.count, 3);
        assert_eq!(c.env_for_map(1).random_obstacles.count, 0);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let text = SAMPLE.replace("n = 4", "n = 3");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
        let text = format!("{SAMPLE}\n[ddqn]\ngamma = 1.5\n");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
        let text = "[run]\nseed = 1\n";
        assert!(RunConfig::parse(text, Path::new(".")).is_err(), "no training maps");
    }
}
