mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use posegate_core::gate::PredictorSpec;

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "posegate",
    version,
    about = "Pose-gated keyframe selection for absolute pose regressors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a database manifest from a training pose file.
    BuildDb {
        /// Pose file: `<image_id> x y z qw qx qy qz` per line.
        #[arg(long)]
        poses: PathBuf,
        /// Directory of `.pgdc` descriptor caches for the training images.
        #[arg(long)]
        descriptors: Option<PathBuf>,
        /// Scene name; defaults to the pose file stem.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract descriptors from image files with the built-in corner detector.
    Extract {
        /// Root directory that image ids are relative to.
        #[arg(long)]
        images: PathBuf,
        /// Pose file listing the image ids to process.
        #[arg(long)]
        poses: PathBuf,
        /// Output directory for `.pgdc` caches.
        #[arg(long)]
        out: PathBuf,
    },
    /// Suggest a match-count threshold from far training pairs.
    TuneGamma {
        #[arg(long)]
        db: PathBuf,
        /// File with one anchor image id per line.
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long = "dth")]
        d_th: f64,
        #[arg(long, default_value_t = 0.7)]
        ratio: f64,
        /// Treat q and -q as the same orientation.
        #[arg(long)]
        sign_invariant: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate a single query image and print its decision as one JSON line.
    Gate {
        #[command(flatten)]
        common: GateArgs,
        #[arg(long)]
        query: String,
        /// Query pose file, needed by synthetic predictors as ground truth.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Gate a query set and report accuracy against ground truth.
    Evaluate {
        #[command(flatten)]
        common: GateArgs,
        /// Ground-truth pose file of the queries.
        #[arg(long)]
        queries: PathBuf,
        /// Also report the ungated predictor and the deltas.
        #[arg(long)]
        ungated_baseline: bool,
        /// Write every decision as a JSON line to this file.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic scene and dump it as pose files and caches.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        landmarks: usize,
        #[arg(long, default_value_t = 1000)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        /// Fraction of test cameras placed outside the training region.
        #[arg(long, default_value_t = 0.3)]
        bias: f64,
        /// Number of training ids written to anchors.txt; defaults to a tenth.
        #[arg(long)]
        anchors: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time retrieval and matching.
    Bench {
        #[arg(long, default_value_t = 1220)]
        db_size: usize,
        #[arg(long, default_value_t = 500)]
        descriptors: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the shipped per-scene hyperparameters.
    Presets,
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    db: PathBuf,
    /// Pose file of predictions, or `synthetic:<sigma_pos>,<sigma_rot_deg>,<p_out>,<seed>`.
    #[arg(long)]
    pred: PredictorSpec,
    #[arg(long = "dth")]
    d_th: f64,
    #[arg(long)]
    gamma: u32,
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    #[arg(long)]
    sign_invariant: bool,
    /// Directory of query `.pgdc` caches; defaults to the database's.
    #[arg(long)]
    query_descriptors: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::BuildDb {
            poses,
            descriptors,
            scene,
            out,
        } => commands::build_db(&poses, descriptors.as_deref(), scene, &out),
        Command::Extract { images, poses, out } => commands::extract(&images, &poses, &out),
        Command::TuneGamma {
            db,
            anchors,
            d_th,
            ratio,
            sign_invariant,
            out,
        } => commands::tune(&db, &anchors, d_th, ratio, sign_invariant, out.as_deref()),
        Command::Gate {
            common,
            query,
            queries,
        } => commands::gate_one(&common.into(), &query, queries.as_deref()),
        Command::Evaluate {
            common,
            queries,
            ungated_baseline,
            log,
            out,
        } => commands::evaluate(
            &common.into(),
            &queries,
            ungated_baseline,
            log.as_deref(),
            out.as_deref(),
        ),
        Command::Synth {
            seed,
            landmarks,
            train,
            test,
            bias,
            anchors,
            out,
        } => commands::synth(seed, landmarks, train, test, bias, anchors, &out),
        Command::Bench {
            db_size,
            descriptors,
            reps,
            seed,
        } => commands::bench(db_size, descriptors, reps, seed),
        Command::Presets => commands::presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<GateArgs> for commands::GateOptions {
    fn from(a: GateArgs) -> Self {
        Self {
            db: a.db,
            pred: a.pred,
            d_th: a.d_th,
            gamma: a.gamma,
            ratio: a.ratio,
            sign_invariant: a.sign_invariant,
            query_descriptors: a.query_descriptors,
        }
    }
}
