//! Closed-form and simulated absorbing-walk statistics.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::Result;
use collision_replay::ruin::{
    expected_duration, mc_absorbing_walk, ruin_probability, ruin_time_pmf, short_path_table, shortest_path_probability,
    AbsorbingWalk, McSummary, RuinParams,
};

use crate::artifacts::hash_comment;
use crate::config::hash_text;
use crate::Failure;

#[derive(Debug, Clone)]
pub struct RuinArgs {
    pub z: u32,
    pub a: u32,
    pub p: f64,
    pub mc: u64,
    pub seed: u64,
    pub t_max: Option<u64>,
    pub curve_p: Vec<f64>,
}

pub struct RuinReport {
    pub hash: String,
    pub params: RuinParams,
    pub t_max: u64,
    /// `None` where the closed form could not be evaluated to full accuracy.
    pub pmf: Vec<Option<f64>>,
    pub mc: Option<McSummary>,
}

pub fn compute(args: &RuinArgs) -> Result<RuinReport> {
    let params = RuinParams::new(args.z, args.a, args.p).map_err(|e| Failure::Usage(e.to_string()))?;
    let t_max = args.t_max.unwrap_or(10 * args.a as u64).max(args.z as u64);
    let hash = hash_text(&format!(
        "ruin z={} a={} p={} mc={} seed={} t_max={t_max}",
        args.z, args.a, args.p, args.mc, args.seed
    ));
    let pmf = (0..=t_max).map(|t| if t == 0 { Some(0.0) } else { ruin_time_pmf(&params, t).ok() }).collect();
    let mc = (args.mc > 0).then(|| {
        let walk = AbsorbingWalk::from(params);
        mc_absorbing_walk(&walk, args.mc, args.seed, t_max)
    });
    Ok(RuinReport { hash, params, t_max, pmf, mc })
}

impl RuinReport {
    fn cdf_until(&self, t: u64) -> Option<f64> {
        self.pmf[..=(t.min(self.t_max) as usize)].iter().copied().sum()
    }

    fn mc_cdf_until(&self, t: u64) -> Option<f64> {
        let mc = self.mc.as_ref()?;
        Some((0..=t.min(self.t_max) as usize).map(|i| mc.ruin_frequency(i)).sum())
    }

    pub fn summary(&self) -> String {
        let p = &self.params;
        let z = p.z as u64;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let mut s = String::new();
        let _ = writeln!(s, "# {}", hash_comment(&self.hash));
        let _ = writeln!(s, "z = {}, a = {}, p_toward = {}", p.z, p.a, p.p_toward);
        let _ = writeln!(s, "ruin_probability        {:.6}", ruin_probability(p));
        let _ = writeln!(s, "expected_duration       {:.4}", expected_duration(p));
        let _ = writeln!(s, "shortest_path_prob      {}", opt(shortest_path_probability(p).ok()));
        let _ = writeln!(s, "P(T <= z+2)             {}", opt(self.cdf_until(z + 2)));
        let _ = writeln!(s, "P(T <= z+4)             {}", opt(self.cdf_until(z + 4)));
        if let Some(mc) = &self.mc {
            let _ = writeln!(s, "mc_episodes             {}", mc.n_episodes);
            let _ = writeln!(s, "mc_ruin_fraction        {:.6}", mc.ruin_fraction());
            let _ = writeln!(s, "mc_mean_duration        {:.4}", mc.mean_time());
            let _ = writeln!(s, "mc_censored             {}", mc.censored);
            let _ = writeln!(s, "mc_shortest_path_freq   {:.6}", mc.ruin_frequency(z as usize));
            let _ = writeln!(s, "mc_P(T <= z+2)          {}", opt(self.mc_cdf_until(z + 2)));
            let _ = writeln!(s, "mc_P(T <= z+4)          {}", opt(self.mc_cdf_until(z + 4)));
        }
        s
    }

    /// `t, pmf, cdf, mc_frequency, mc_cdf` for `t = 1..=t_max`.
    pub fn write_pmf_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", hash_comment(&self.hash))?;
        writeln!(out, "t,pmf,cdf,mc_frequency,mc_cdf")?;
        let (mut cdf, mut mc_cdf) = (Some(0.0), 0.0);
        for t in 1..=self.t_max {
            let pmf = self.pmf[t as usize];
            cdf = cdf.zip(pmf).map(|(c, p)| c + p);
            let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.9}"));
            let mc = self.mc.as_ref().map(|mc| mc.ruin_frequency(t as usize));
            if let Some(f) = mc {
                mc_cdf += f;
            }
            writeln!(out, "{t},{},{},{},{}", fmt(pmf), fmt(cdf), fmt(mc), fmt(mc.map(|_| mc_cdf)))?;
        }
        Ok(())
    }
}

/// `P(T = z)`, `P(T <= z+2)`, `P(T <= z+4)` over starts `1..=a/2` for each bias.
pub fn write_short_path_csv<W: Write>(args: &RuinArgs, hash: &str, mut out: W) -> Result<()> {
    let rows = short_path_table(args.a, &args.curve_p, 1..=args.a / 2).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(out, "# {}", hash_comment(hash))?;
    writeln!(out, "z,p_toward,exact,within_2,within_4")?;
    for r in rows {
        writeln!(out, "{},{},{:.9},{:.9},{:.9}", r.z, r.p_toward, r.exact, r.within_2, r.within_4)?;
    }
    Ok(())
}
