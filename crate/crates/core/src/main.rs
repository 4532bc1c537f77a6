use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hesynth::bench::run_suite;
use hesynth::codegen::{generate, parse_json_ir};
use hesynth::config::{self, PipelineConfig, RunConfig, SuiteConfig};
use hesynth::ir::{eval_slots, json, Program};
use hesynth::kernels::{KernelParams, KernelRegistry};
use hesynth::pipeline::{synthesize_multistep, Pipeline};
use hesynth::search::BackendRegistry;
use hesynth::spec::random_example;
use hesynth::synth::{synthesize, SynthConfig};
use hesynth::verify::{verify, Verdict};
use hesynth::{Error, Result};

#[derive(Parser)]
#[command(name = "hesynth", version, about = "Synthesizing compiler for vectorized BFV kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one kernel and emit its report, IR and backend source.
    Synth(SynthArgs),
    /// Check a program against a kernel specification.
    Verify(VerifyArgs),
    /// Evaluate a program on seeded random inputs.
    Run(RunArgs),
    /// Run the benchmark suite and print the comparison table.
    Bench(BenchArgs),
    /// Synthesize a multi-step pipeline stage by stage.
    Pipeline(PipelineArgs),
    /// Lower a program and render it with a codegen template.
    Codegen(CodegenArgs),
    /// List registered kernels, search backends and codegen templates.
    List,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    /// Stop after the first verified solution.
    #[arg(long)]
    no_optimize: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Search backend name.
    #[arg(long)]
    backend: Option<String>,
    /// Codegen template name.
    #[arg(long)]
    template: Option<String>,
    /// Include wall-clock times in JSON reports.
    #[arg(long)]
    with_times: bool,
}

impl Common {
    fn apply(&self, synth: &mut SynthConfig, output: &mut config::OutputConfig) {
        if let Some(s) = self.seed {
            synth.seed = s;
        }
        if let Some(t) = self.timeout_secs {
            synth.timeout_secs = t;
        }
        if self.no_optimize {
            synth.optimize = false;
        }
        if let Some(b) = &self.backend {
            synth.backend = b.clone();
        }
        if let Some(d) = &self.out_dir {
            output.dir = Some(d.clone());
        }
        if let Some(t) = &self.template {
            output.template = t.clone();
        }
        output.with_times |= self.with_times;
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Kernel name (overrides the config file).
    #[arg(long)]
    kernel: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct KernelSelect {
    #[arg(long)]
    kernel: String,
    /// Kernel size parameters as inline JSON, e.g. '{"length": 4}'.
    #[arg(long)]
    params: Option<String>,
}

impl KernelSelect {
    fn params(&self) -> Result<KernelParams> {
        self.params.as_deref().map_or(Ok(KernelParams::default()), config::parse)
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Program JSON or emitted IR file.
    #[arg(long)]
    program: PathBuf,
    #[command(flatten)]
    kernel: KernelSelect,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compare against this kernel's reference.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    params: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated kernels (overrides the config file).
    #[arg(long, value_delimiter = ',')]
    kernels: Option<Vec<String>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PipelineArgs {
    /// Built-in pipeline name (sobel, harris).
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CodegenArgs {
    #[arg(long)]
    program: PathBuf,
    /// Kernel name used for file and function names.
    #[arg(long)]
    name: String,
    #[arg(long, default_value = config::DEFAULT_TEMPLATE)]
    template: String,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}

/// Runs a subcommand; `Ok(false)` means it completed but the result is negative.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Codegen(a) => cmd_codegen(a),
        Command::List => {
            println!("kernels:   {}", KernelRegistry::with_builtin().names().join(", "));
            println!("backends:  {}", BackendRegistry::with_builtin().names().join(", "));
            println!("templates: {}", hesynth::codegen::TemplateRegistry::with_builtin().names().join(", "));
            Ok(true)
        }
    }
}

fn write(dir: &Path, file: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(file);
    std::fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cmd_synth(a: SynthArgs) -> Result<bool> {
    let mut cfg = match (&a.common.config, &a.kernel) {
        (Some(path), kernel) => {
            let mut cfg: RunConfig = config::load(path)?;
            if let Some(k) = kernel {
                cfg.kernel = k.clone();
            }
            cfg
        }
        (None, Some(k)) => RunConfig::new(k),
        (None, None) => return Err(Error::Config("synth needs --config or --kernel".into())),
    };
    a.common.apply(&mut cfg.synth, &mut cfg.output);
    cfg.validate()?;
    let ctx = config::context(&cfg.synth.backend, cfg.costs)?;
    let template = config::template(&cfg.output.template)?;
    let kernel = KernelRegistry::with_builtin().get(&cfg.kernel)?;
    let spec = kernel.spec(&cfg.params)?;
    let sketch = kernel.sketch(&spec)?;
    let report = synthesize(&ctx, &spec, &sketch, &cfg.synth)?;
    let sol = &report.final_solution;
    println!(
        "{}: {} instructions ({} rotations), mdepth {}, cost {} (initial {}), {} examples, {:.2}s",
        cfg.kernel,
        sol.counts.total,
        sol.counts.rotations,
        sol.mdepth,
        sol.cost,
        report.initial.cost,
        report.examples,
        report.total_time.as_secs_f64()
    );
    println!("{}", sol.program);
    if let Some(dir) = &cfg.output.dir {
        let art = generate(&cfg.kernel, &sol.program, template.as_ref())?;
        write(dir, &format!("{}.report.json", cfg.kernel), &to_json(&report.to_doc(cfg.output.with_times)?)?)?;
        write(dir, &art.ir_file, &art.ir)?;
        write(dir, &art.source_file, &art.source)?;
    }
    Ok(true)
}

/// Reads either a plain program document or an emitted IR file.
fn read_program(path: &Path) -> Result<Program> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if value.get("meta").is_some() {
        Ok(parse_json_ir(&text)?.1)
    } else {
        json::from_value(value)
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let program = read_program(&a.program)?;
    let spec = KernelRegistry::with_builtin().get(&a.kernel.kernel)?.spec(&a.kernel.params()?)?;
    match verify(&program, &spec)? {
        Verdict::Equivalent => {
            println!("equivalent");
            Ok(true)
        }
        Verdict::Counterexample { example, actual } => {
            println!("counterexample");
            for (name, slots) in spec.input_names().iter().zip(&example.inputs) {
                println!("  {name} = {slots:?}");
            }
            for ((slot, want), (_, got)) in example.expected.iter().zip(&actual) {
                if want != got {
                    println!("  slot {slot}: expected {want}, got {got}");
                }
            }
            Ok(false)
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<bool> {
    let program = read_program(&a.program)?;
    let (inputs, expected) = match &a.kernel {
        Some(k) => {
            let params = a.params.as_deref().map_or(Ok(KernelParams::default()), config::parse)?;
            let spec = KernelRegistry::with_builtin().get(k)?.spec(&params)?;
            let ex = random_example(&spec, a.seed);
            (ex.inputs, Some(ex.expected))
        }
        None => {
            let spec_free = hesynth::spec::random_inputs(&program.params, program.ct_inputs.len(), a.seed);
            (spec_free, None)
        }
    };
    let out = eval_slots(&program, &inputs)?;
    for (name, slots) in program.ct_inputs.iter().zip(&inputs) {
        println!("{name} = {slots:?}");
    }
    println!("out = {out:?}");
    match expected {
        Some(exp) => {
            let ok = exp.iter().all(|&(s, v)| out[s] == v);
            println!("{}", if ok { "matches reference" } else { "DIFFERS from reference" });
            Ok(ok)
        }
        None => Ok(true),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    let mut cfg: SuiteConfig = match &a.common.config {
        Some(path) => config::load(path)?,
        None => SuiteConfig::default(),
    };
    if let Some(k) = a.kernels {
        cfg.kernels = k;
    }
    a.common.apply(&mut cfg.synth, &mut cfg.output);
    let ctx = config::context(&cfg.synth.backend, cfg.costs)?;
    let report = run_suite(&ctx, &KernelRegistry::with_builtin(), &cfg)?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &cfg.output.dir {
        write(dir, "bench.json", &report.to_json(cfg.output.with_times)?)?;
        write(dir, "bench.txt", &table)?;
    }
    Ok(report.passed())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<bool> {
    let mut cfg: PipelineConfig = match (&a.common.config, &a.name) {
        (Some(path), _) => config::load(path)?,
        (None, Some(name)) => PipelineConfig::builtin(name),
        (None, None) => return Err(Error::Config("pipeline needs --config or --name".into())),
    };
    if let (Some(_), Some(name)) = (&a.common.config, &a.name) {
        cfg.pipeline = Some(name.clone());
        cfg.definition = None;
    }
    a.common.apply(&mut cfg.synth, &mut cfg.output);
    cfg.validate()?;
    let def = cfg.definition()?;
    let pipeline = Pipeline::build(&def, &KernelRegistry::with_builtin())?;
    let ctx = config::context(&cfg.synth.backend, cfg.costs)?;
    let result = synthesize_multistep(&ctx, &pipeline, &cfg.synth)?;
    let doc = result.to_doc()?;
    for s in &doc.stages {
        println!("  {:<10} {:<22} baseline {:>3}  synthesized {:>3}", s.name, s.kernel, s.baseline_instructions, s.instructions);
    }
    println!(
        "{}: baseline {} instructions, synthesized {}, verified {}",
        doc.name, doc.baseline_instructions, doc.instructions, doc.verified
    );
    if let Some(dir) = &cfg.output.dir {
        let template = config::template(&cfg.output.template)?;
        let art = generate(&doc.name, &result.program, template.as_ref())?;
        write(dir, &format!("{}.pipeline.json", doc.name), &to_json(&doc)?)?;
        write(dir, &art.ir_file, &art.ir)?;
        write(dir, &art.source_file, &art.source)?;
    }
    Ok(doc.verified)
}

fn cmd_codegen(a: CodegenArgs) -> Result<bool> {
    let program = read_program(&a.program)?;
    let template = config::template(&a.template)?;
    let art = generate(&a.name, &program, template.as_ref())?;
    match &a.out_dir {
        Some(dir) => {
            write(dir, &art.ir_file, &art.ir)?;
            write(dir, &art.source_file, &art.source)?;
        }
        None => print!("{}", art.source),
    }
    Ok(true)
}
