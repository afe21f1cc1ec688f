use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use eprcam_core::analysis::{report_from_widths, table1_widths, Provenance, ReportSource};
use eprcam_core::phl1::{Phl1Reader, Phl1Writer};
use eprcam_core::pipeline::Pipeline;
use eprcam_core::sim::{DetectorSim, LinkCsvWriter, PairCsvWriter};
use eprcam_core::{certify, Basis, CertificationReport, CoincidencePair, Half, Jpd, ProjectionKind};

use crate::config::RunConfig;
use crate::CliError;

/// Emitted pairs are flushed to the truth file this often, in hits.
const TRUTH_FLUSH_HITS: u64 = 1 << 16;

fn data_err(what: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{what}: {e}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| data_err(path.display(), e))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| data_err(dir.display(), e))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let basis = cfg.basis()?;
    let sim_cfg = cfg.sim_config(basis)?;
    out_dir(out)?;
    let hits_path = out.join("hits.phl1");
    let truth_path = out.join("truth.csv");
    let links_path = out.join("truth_links.csv");

    let mut sim = DetectorSim::new(sim_cfg)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .record_pairs(true);
    let duration_ps = sim.duration_ps();
    let io = |p: &PathBuf| {
        let p = p.display().to_string();
        move |e: std::io::Error| data_err(&p, e)
    };
    let mut writer = Phl1Writer::new(create(&hits_path)?).map_err(|e| data_err(hits_path.display(), e))?;
    let mut truth = PairCsvWriter::new(create(&truth_path)?).map_err(io(&truth_path))?;
    let mut links = match cfg.truth_links()? {
        true => Some(LinkCsvWriter::new(create(&links_path)?).map_err(io(&links_path))?),
        false => None,
    };
    while let Some(h) = sim.next() {
        writer.push(&h.hit).map_err(|e| data_err(hits_path.display(), e))?;
        if let Some(l) = links.as_mut() {
            l.push(&h).map_err(io(&links_path))?;
        }
        if writer.count() % TRUTH_FLUSH_HITS == 0 {
            for p in sim.take_emitted() {
                truth.push(&p).map_err(io(&truth_path))?;
            }
        }
    }
    for p in sim.take_emitted() {
        truth.push(&p).map_err(io(&truth_path))?;
    }
    let hits = writer.count();
    writer
        .finish(duration_ps)
        .and_then(|w| w.into_inner().map_err(|e| e.into_error().into()))
        .map_err(|e| data_err(hits_path.display(), e))?;
    truth.finish().map_err(io(&truth_path))?;
    if let Some(l) = links {
        l.finish().map_err(io(&links_path))?;
    }

    let s = sim.stats();
    println!("basis             {basis}");
    println!("duration_s        {}", sim_cfg.duration_s);
    println!("pair_rate_hz      {:.6e}", sim_cfg.source.pair_rate_hz);
    println!("pairs_emitted     {}", s.pairs_emitted);
    println!("photons_detected  {}", s.photons_detected);
    println!("dark_hits         {}", s.dark_hits);
    println!("hits_written      {hits}");
    println!(
        "hits_file_bytes   {}",
        std::fs::metadata(&hits_path).map(|m| m.len()).unwrap_or(0)
    );
    println!("config_hash       {}", cfg.hash());
    Ok(())
}

/// Left photon first when the pair spans both halves.
fn ordered(p: &CoincidencePair) -> (&eprcam_core::PhotonEvent, &eprcam_core::PhotonEvent) {
    if p.b.half == Half::Left && p.a.half == Half::Right {
        (&p.b, &p.a)
    } else {
        (&p.a, &p.b)
    }
}

pub fn process(cfg: &RunConfig, hits: &Path, out: &Path) -> Result<(), CliError> {
    let basis = cfg.basis()?;
    let file = File::open(hits).map_err(|e| data_err(hits.display(), e))?;
    let reader = Phl1Reader::new(BufReader::new(file)).map_err(|e| data_err(hits.display(), e))?;
    let header = reader.header();
    out_dir(out)?;
    let pairs_path = out.join("pairs.csv");
    let mut pairs_out = create(&pairs_path)?;
    let pio = |e: std::io::Error| data_err(pairs_path.display(), e);
    writeln!(pairs_out, "cx1,cy1,t1_ps,cx2,cy2,t2_ps,dt_ps").map_err(pio)?;

    let mut pipe = Pipeline::new(cfg.pipeline()?).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut jpd = Jpd::new(cfg.optics(basis)?, header.duration_ps as f64 * 1e-12);
    let mut sink = |pipe: &mut Pipeline, jpd: &mut Jpd| -> std::io::Result<()> {
        for p in pipe.drain_pairs() {
            let (a, b) = ordered(&p);
            writeln!(
                pairs_out,
                "{},{},{},{},{},{},{}",
                a.cx, a.cy, a.t_ps, b.cx, b.cy, b.t_ps, p.dt_ps
            )?;
            jpd.add_pair(&p);
        }
        Ok(())
    };
    for h in reader {
        let h = h.map_err(|e| data_err(hits.display(), e))?;
        pipe.push_hit(h).map_err(|e| data_err(hits.display(), e))?;
        sink(&mut pipe, &mut jpd).map_err(pio)?;
    }
    pipe.finish().map_err(|e| data_err(hits.display(), e))?;
    sink(&mut pipe, &mut jpd).map_err(pio)?;
    drop(sink);
    pairs_out.flush().map_err(pio)?;

    let jpd_path = out.join("jpd.csv");
    let meta_path = out.join("jpd.csv.meta");
    jpd.write_csv(create(&jpd_path)?)
        .map_err(|e| data_err(jpd_path.display(), e))?;
    jpd.write_meta(create(&meta_path)?)
        .map_err(|e| data_err(meta_path.display(), e))?;

    let s = pipe.stats();
    println!("basis             {basis}");
    println!("hits              {}", s.hits);
    println!("clusters          {}", s.clusters);
    println!("events_left       {}", s.events_left);
    println!("events_right      {}", s.events_right);
    println!("timewalk_c_ps     {}", s.timewalk_c_ps);
    println!("pairs             {}", s.pairs);
    println!("jpd_total         {}", jpd.total_pairs());
    println!("jpd_bins          {}", jpd.occupied_bins());
    if let Some(w) = &s.timewalk_warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn load_jpd(path: &Path, expect: Basis) -> Result<Jpd, CliError> {
    let mut meta = path.as_os_str().to_owned();
    meta.push(".meta");
    let meta = PathBuf::from(meta);
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| data_err(p.display(), e));
    let j = Jpd::read(open(path)?, open(&meta)?).map_err(|e| data_err(path.display(), e))?;
    if j.basis != expect {
        return Err(CliError::Usage(format!(
            "{} holds a {} histogram, expected {expect}",
            path.display(),
            j.basis
        )));
    }
    Ok(j)
}

/// Marginal of the right half, the right-half conditional on the brightest
/// left pixel, and the minus and sum projections.
fn write_projections(j: &Jpd, out: &Path) -> Result<(), CliError> {
    let left = j.marginal(Half::Left).argmax();
    let reference = (left.0 as u16, left.1 as u16);
    let mut grids = vec![j.marginal(Half::Right)];
    if let Ok(c) = j.conditional(reference) {
        grids.push(c);
    }
    grids.push(j.minus_projection());
    grids.push(j.sum_projection());
    for g in grids {
        let stem = format!("{}_{}", j.basis, g.kind.name());
        let txt = out.join(format!("{stem}.txt"));
        let pgm = out.join(format!("{stem}.pgm"));
        g.write_text(create(&txt)?).map_err(|e| data_err(txt.display(), e))?;
        g.write_pgm(create(&pgm)?).map_err(|e| data_err(pgm.display(), e))?;
        if let ProjectionKind::Conditional { ref_px } = g.kind {
            println!("{}: conditional on left pixel ({}, {})", j.basis, ref_px.0, ref_px.1);
        }
    }
    Ok(())
}

fn write_report(r: &CertificationReport, out: &Path) -> Result<(), CliError> {
    let kv = out.join("report.kv");
    let txt = out.join("report.txt");
    std::fs::write(&kv, r.to_kv()).map_err(|e| data_err(kv.display(), e))?;
    std::fs::write(&txt, r.to_text()).map_err(|e| data_err(txt.display(), e))?;
    Ok(())
}

pub fn analyze(
    cfg: &RunConfig,
    nf: Option<&Path>,
    ff: Option<&Path>,
    inject_table1: bool,
    out: &Path,
) -> Result<(), CliError> {
    let report = if inject_table1 {
        let mut r = report_from_widths(&table1_widths(), ReportSource::Injected);
        r.provenance = Provenance {
            inputs: vec!["table1".into()],
            config_hash: cfg.hash(),
        };
        out_dir(out)?;
        r
    } else {
        let (nf, ff) = match (nf, ff) {
            (Some(nf), Some(ff)) => (nf, ff),
            _ => {
                let missing: Vec<&str> = [("--nf", nf.is_none()), ("--ff", ff.is_none())]
                    .into_iter()
                    .filter_map(|(f, m)| m.then_some(f))
                    .collect();
                return Err(CliError::Usage(format!(
                    "analyze needs a near-field and a far-field histogram (--nf <jpd.csv> --ff <jpd.csv>); missing {}",
                    missing.join(" and ")
                )));
            }
        };
        let nf_jpd = load_jpd(nf, Basis::NearField)?;
        let ff_jpd = load_jpd(ff, Basis::FarField)?;
        let provenance = Provenance {
            inputs: vec![nf.display().to_string(), ff.display().to_string()],
            config_hash: cfg.hash(),
        };
        let r =
            certify(&nf_jpd, &ff_jpd, &cfg.analysis()?, provenance).map_err(|e| CliError::Analysis(e.to_string()))?;
        out_dir(out)?;
        write_projections(&nf_jpd, out)?;
        write_projections(&ff_jpd, out)?;
        r
    };
    write_report(&report, out)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn report(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path.display(), e))?;
    let (r, unknown) = CertificationReport::from_kv(&text).map_err(|e| data_err(path.display(), e))?;
    for k in unknown {
        eprintln!("warning: {k}");
    }
    print!("{}", r.to_text());
    Ok(())
}
