use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use graphfield::config::Settings;
use graphfield::experiments::{
    run_covariance_convergence, run_deterministic_convergence, run_strong_convergence,
    ExperimentConfig, Forcing, RateTable, StepRule,
};
use graphfield::fractional::{FracExponent, ResolventSolver};
use graphfield::spectral::{
    dense_pencil_eigs, interlacing_check, pencil_eigs, weyl_check, EigenSystem, VertexCondition,
};
use graphfield::whittle_matern::{
    covariance_matrix, resolve_step, sample_field, CovarianceMode, RNG_ALGORITHM,
};
use graphfield::{Error, Mesh, MetricGraph, OperatorPair, Result};

// Output goes to pipes like `head`; a closed pipe is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "graphfield",
    version,
    about = "Fractional elliptic problems and Whittle-Matern fields on metric graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh the graph and write its nodes
    Mesh,
    /// Smallest eigenvalues of the discrete operator
    Eig,
    /// Solve L^beta u = f
    Solve,
    /// Draw Whittle-Matern field samples
    Sample,
    /// Covariance matrix of the discrete field
    Cov,
    /// Strong convergence study
    ConvergeStrong,
    /// Covariance convergence study
    ConvergeCov,
    /// Deterministic convergence study
    ConvergeDet,
    /// Bounds C1, C2 with C1 n^2 <= lambda_n <= C2 n^2
    Weyl,
    /// Eigenvalue interlacing under a vertex condition change
    Interlace,
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
struct Opts {
    /// key = value settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Builtin graph name or edge-list file
    #[arg(long, global = true)]
    graph: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Comma separated beta values for convergence studies
    #[arg(long, global = true)]
    betas: Option<String>,
    /// Maximal element length
    #[arg(long, global = true)]
    h: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Constant or `c0,c1,c2,c3` polynomial
    #[arg(long, global = true, allow_hyphen_values = true)]
    kappa2: Option<String>,
    /// Constant or `c0,c1,c2,c3` polynomial
    #[arg(long = "H", global = true, allow_hyphen_values = true)]
    big_h: Option<String>,
    /// Sinc quadrature step
    #[arg(long, global = true, allow_hyphen_values = true)]
    k: Option<String>,
    /// Right-hand side: zero, cos, noise[:seed] or polynomial coefficients
    #[arg(long, global = true, allow_hyphen_values = true)]
    f: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Number of samples
    #[arg(long, global = true)]
    n: Option<String>,
    /// eigen or sinc
    #[arg(long, global = true)]
    mode: Option<String>,
    /// dense or triplets
    #[arg(long, global = true)]
    format: Option<String>,
    /// Number of eigenvalues
    #[arg(long, global = true)]
    count: Option<String>,
    /// Vertex id for interlace
    #[arg(long, global = true)]
    vertex: Option<String>,
    /// dirichlet or a new vertex coefficient
    #[arg(long, global = true)]
    condition: Option<String>,
    /// Mesh levels `lo..hi`
    #[arg(long, global = true)]
    levels: Option<String>,
    #[arg(long, global = true)]
    overkill: Option<String>,
    #[arg(long, global = true)]
    replicates: Option<String>,
    /// Also write eigenvectors
    #[arg(long, global = true)]
    vectors: bool,
}

impl Opts {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        let flags = [
            ("graph", &self.graph),
            ("beta", &self.beta),
            ("betas", &self.betas),
            ("h", &self.h),
            ("alpha", &self.alpha),
            ("kappa2", &self.kappa2),
            ("H", &self.big_h),
            ("k", &self.k),
            ("f", &self.f),
            ("seed", &self.seed),
            ("n", &self.n),
            ("mode", &self.mode),
            ("format", &self.format),
            ("count", &self.count),
            ("vertex", &self.vertex),
            ("condition", &self.condition),
            ("levels", &self.levels),
            ("overkill", &self.overkill),
            ("replicates", &self.replicates),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v.clone());
            }
        }
        if let Some(out) = &self.out {
            s.set("out", out.to_string_lossy());
        }
        if self.vectors {
            s.set("vectors", "true");
        }
        Ok(s)
    }
}

struct Run {
    s: Settings,
}

impl Run {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = PathBuf::from(self.s.get("out").unwrap_or("."));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir()?.join(name);
        std::fs::write(&path, contents)?;
        say!("wrote {}", path.display());
        Ok(path)
    }

    fn graph(&self) -> Result<Arc<MetricGraph>> {
        Ok(Arc::new(MetricGraph::load(self.s.get("graph").unwrap_or("interval"))?))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.s.get_f64(key)?.unwrap_or(default))
    }

    fn step(&self) -> Result<Option<f64>> {
        self.s.get_f64("k")
    }

    fn operator(&self) -> Result<OperatorPair> {
        let mesh = Mesh::build(self.graph()?, self.f64_or("h", 0.01)?)?;
        OperatorPair::assemble(
            Arc::new(mesh),
            self.s.coefficient_field()?,
            self.f64_or("alpha", 1.0)?,
        )
    }

    fn nodal_csv(header: &str, ops: &OperatorPair, rows: &[(String, &[f64])]) -> String {
        let mut csv = format!("{header}\n");
        let table = ops.mesh().node_table();
        for (prefix, values) in rows {
            for &(edge, t, dof) in &table {
                let _ = writeln!(csv, "{prefix}{edge},{t},{}", values[dof]);
            }
        }
        csv
    }

    fn mesh(&self) -> Result<()> {
        let ops = self.operator()?;
        let mesh = ops.mesh();
        let mut csv = String::from("dof,edge,t\n");
        for (edge, t, dof) in mesh.node_table() {
            let _ = writeln!(csv, "{dof},{edge},{t}");
        }
        let report = ops.wellposedness();
        say!(
            "dofs {} elements {} max_h {} wellposed {}",
            mesh.num_dofs(),
            mesh.num_elements(),
            mesh.max_step(),
            report.passes()
        );
        say!("{report:?}");
        self.write("mesh.csv", &csv)?;
        Ok(())
    }

    fn eigensystem(&self, ops: &OperatorPair) -> Result<EigenSystem> {
        match self.s.get_u64("count")? {
            Some(c) => pencil_eigs(ops.stiffness(), ops.mass(), c as usize),
            None => dense_pencil_eigs(ops.stiffness(), ops.mass()),
        }
    }

    fn eig(&self) -> Result<()> {
        let ops = self.operator()?;
        let es = self.eigensystem(&ops)?;
        let mut csv = String::from("index,lambda\n");
        for (i, l) in es.values.iter().enumerate() {
            let _ = writeln!(csv, "{},{l}", i + 1);
        }
        self.write("eigenvalues.csv", &csv)?;
        if self.s.get("vectors") == Some("true") {
            let mut csv = String::from("dof");
            for i in 0..es.len() {
                let _ = write!(csv, ",e{}", i + 1);
            }
            csv.push('\n');
            for dof in 0..es.vectors.nrows() {
                let _ = write!(csv, "{dof}");
                for j in 0..es.len() {
                    let _ = write!(csv, ",{}", es.vectors[(dof, j)]);
                }
                csv.push('\n');
            }
            self.write("eigenvectors.csv", &csv)?;
        }
        Ok(())
    }

    fn beta(&self) -> Result<f64> {
        self.f64_or("beta", 1.0)
    }

    fn solve(&self) -> Result<()> {
        let ops = self.operator()?;
        let beta = self.beta()?;
        let forcing: Forcing = self.s.get("f").unwrap_or("cos").parse()?;
        let rhs = match forcing {
            Forcing::Noise { seed } => {
                graphfield::whittle_matern::NoiseSampler::new(ops.mass(), seed)?.draw(0).values
            }
            ref f => f.load(ops.mesh()),
        };
        if !ops.wellposedness().passes() {
            return Err(Error::InvalidArgument(format!(
                "operator is not known to be well posed: {:?}",
                ops.wellposedness()
            )));
        }
        let step = resolve_step(beta, ops.mesh(), self.step()?)?;
        let u = ResolventSolver::new(&ops)
            .apply_fractional_inverse(FracExponent::new(beta)?, &[rhs], step)?
            .pop()
            .expect("one right-hand side");
        say!("beta {beta} k {step} dofs {}", ops.num_dofs());
        self.write("solution.csv", &Self::nodal_csv("edge,t,value", &ops, &[(String::new(), &u)]))?;
        Ok(())
    }

    fn sample(&self) -> Result<()> {
        let ops = self.operator()?;
        let beta = self.beta()?;
        let seed = self.s.get_u64("seed")?.unwrap_or(0);
        let n = self.s.get_u64("n")?.unwrap_or(1) as usize;
        let samples = sample_field(&ops, beta, self.step()?, seed, n)?;
        let rows: Vec<(String, &[f64])> = samples
            .iter()
            .map(|s| (format!("{},", s.draw), s.coefficients.as_slice()))
            .collect();
        say!(
            "beta {beta} seed {seed} n {n} k {} rng {RNG_ALGORITHM}",
            samples.first().map_or(f64::NAN, |s| s.step)
        );
        self.write("samples.csv", &Self::nodal_csv("sample_id,edge,t,value", &ops, &rows))?;
        Ok(())
    }

    fn cov(&self) -> Result<()> {
        let ops = self.operator()?;
        let mode: CovarianceMode = self.s.get("mode").unwrap_or("eigen").parse()?;
        if ops.num_dofs() > graphfield::spectral::DENSE_LIMIT {
            return Err(Error::SizeLimit {
                size: ops.num_dofs(),
                limit: graphfield::spectral::DENSE_LIMIT,
            });
        }
        let c = covariance_matrix(&ops, self.beta()?, mode, self.step()?)?;
        let n = c.dim();
        let mut csv = String::new();
        match self.s.get("format").unwrap_or("dense") {
            "dense" => {
                for i in 0..n {
                    let row: Vec<String> = (0..n).map(|j| c.values[(i, j)].to_string()).collect();
                    csv += &row.join(",");
                    csv.push('\n');
                }
            }
            "triplets" => {
                csv.push_str("i,j,value\n");
                for i in 0..n {
                    for j in 0..n {
                        let _ = writeln!(csv, "{i},{j},{}", c.values[(i, j)]);
                    }
                }
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "format must be `dense` or `triplets`, got `{other}`"
                )))
            }
        }
        self.write("covariance.csv", &csv)?;
        Ok(())
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.graph()?);
        cfg.coefficients = self.s.coefficient_field()?;
        cfg.alpha = self.f64_or("alpha", cfg.alpha)?;
        if let Some(b) = self.s.get_list("betas")? {
            cfg.betas = b;
        } else if let Some(b) = self.s.get_f64("beta")? {
            cfg.betas = vec![b];
        }
        if let Some((lo, hi)) = self.s.get_levels("levels")? {
            cfg.level_lo = lo;
            cfg.level_hi = hi;
        }
        cfg.overkill_level = self.s.get_u64("overkill")?.map(|o| o as u32);
        if let Some(r) = self.s.get_u64("replicates")? {
            cfg.replicates = r as usize;
        }
        cfg.seed = self.s.get_u64("seed")?.unwrap_or(0);
        if let Some(k) = self.step()? {
            cfg.step = StepRule::Fixed(k);
        }
        if let Some(f) = self.s.get("f") {
            cfg.forcing = f.parse()?;
        }
        cfg.output = Some(self.out_dir()?);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rates(&self, table: &RateTable, stem: &str) -> Result<()> {
        for row in &table.rows {
            let fitted = row.fitted.map_or("n/a".to_string(), |r| format!("{r:.3}"));
            say!("beta {} rate {fitted} ({})", row.beta, row.theoretical);
        }
        let (a, b) = table.write_csv(&self.out_dir()?, stem)?;
        say!("wrote {}\nwrote {}", a.display(), b.display());
        Ok(())
    }

    fn weyl(&self) -> Result<()> {
        let ops = self.operator()?;
        let es = self.eigensystem(&ops)?;
        let hi = es.len();
        let (c1, c2) = weyl_check(&es, 1, hi)?;
        say!("C1 {c1} C2 {c2} over n = 1..{hi}");
        let mut csv = String::from("n,lambda,ratio\n");
        for (i, l) in es.values.iter().enumerate() {
            let n = (i + 1) as f64;
            let _ = writeln!(csv, "{},{l},{}", i + 1, l / (n * n));
        }
        self.write("weyl.csv", &csv)?;
        Ok(())
    }

    fn interlace(&self) -> Result<()> {
        let ops = self.operator()?;
        let id = self.s.get_u64("vertex")?.unwrap_or(0);
        let vertex = ops.mesh().graph().vertex_index(id)?;
        let cond = match self.s.get("condition").unwrap_or("dirichlet") {
            "dirichlet" => VertexCondition::Dirichlet,
            other => VertexCondition::Kirchhoff(other.parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "condition must be `dirichlet` or a number, got `{other}`"
                ))
            })?),
        };
        let r = interlacing_check(&ops, vertex, cond)?;
        say!("holds {} worst margin {}", r.holds, r.worst_margin);
        let mut csv = String::from("n,base,perturbed\n");
        for (i, b) in r.base.iter().enumerate() {
            let p = r.perturbed.get(i).map_or(String::new(), |p| p.to_string());
            let _ = writeln!(csv, "{},{b},{p}", i + 1);
        }
        self.write("interlace.csv", &csv)?;
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let run = Run {
        s: cli.opts.settings()?,
    };
    match cli.command {
        Command::Mesh => run.mesh(),
        Command::Eig => run.eig(),
        Command::Solve => run.solve(),
        Command::Sample => run.sample(),
        Command::Cov => run.cov(),
        Command::ConvergeStrong => {
            let cfg = run.experiment()?;
            run.rates(&run_strong_convergence(&cfg)?, "strong")
        }
        Command::ConvergeCov => {
            let cfg = run.experiment()?;
            run.rates(&run_covariance_convergence(&cfg)?, "covariance")
        }
        Command::ConvergeDet => {
            let cfg = run.experiment()?;
            run.rates(&run_deterministic_convergence(&cfg)?, "deterministic")
        }
        Command::Weyl => run.weyl(),
        Command::Interlace => run.interlace(),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GRAPHFIELD_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("GRAPHFIELD_THREADS must be an integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_solver_failure() { 3 } else { 2 })
        }
    }
}
