use std::path::PathBuf;

use clap::{Args, ValueEnum};
use plnma::inference::{wald_interval, TreatmentEffects};
use plnma::ivcomparator::iv_nma;
use plnma::overdispersion::fletcher_phi;
use plnma::{
    league_table, profile_contrast, wald_table, CiKind, ContrastRow, ContrastTable, DfMode,
    FitOptions, FitResult, IvFit, Network, PhiEstimate, Tau2Estimate,
};

use crate::error::{CliError, CliResult};
use crate::input::read_records_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pl,
    Mle,
    IvCommon,
    IvRandom,
}

impl MethodArg {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodArg::Pl => "pl",
            MethodArg::Mle => "mle",
            MethodArg::IvCommon => "iv-common",
            MethodArg::IvRandom => "iv-random",
        }
    }

    fn is_iv(&self) -> bool {
        matches!(self, MethodArg::IvCommon | MethodArg::IvRandom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiArg {
    Wald,
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum YesNo {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DfModeArg {
    Paper,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV with columns study,treatment,events,n
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Pl)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = CiArg::Wald)]
    pub ci: CiArg,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Reference treatment (default: first label in sort order)
    #[arg(long = "ref")]
    pub reference: Option<String>,
    /// Fletcher overdispersion scaling of Wald intervals [default: on for pl]
    #[arg(long, value_enum)]
    pub phi: Option<Switch>,
    #[arg(long, value_enum, default_value_t = DfModeArg::Paper)]
    pub df_mode: DfModeArg,
    /// Keep studies with no events in any arm [default: yes; always no for iv]
    #[arg(long, value_enum)]
    pub include_all_zero: Option<YesNo>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Accepted for symmetry with `simulate`; fits are deterministic
    #[arg(long)]
    pub seed: Option<u64>,
}

impl FitArgs {
    pub fn ci_kind(&self) -> CiKind {
        match self.ci {
            CiArg::Wald => CiKind::Wald,
            CiArg::Profile => CiKind::Profile,
        }
    }

    fn df_mode(&self) -> DfMode {
        match self.df_mode {
            DfModeArg::Paper => DfMode::Paper,
            DfModeArg::Residual => DfMode::Residual,
        }
    }
}

pub enum Model {
    Likelihood(FitResult),
    Iv {
        fit: IvFit,
        tau2: Option<Tau2Estimate>,
    },
}

pub struct Analysis {
    pub method: MethodArg,
    pub ci_kind: CiKind,
    pub level: f64,
    /// Network as read from the input.
    pub input: Network,
    /// Network actually analysed.
    pub net: Network,
    pub all_zero_included: bool,
    pub excluded: Vec<String>,
    pub model: Model,
    pub phi: Option<PhiEstimate>,
    pub notes: Vec<String>,
}

pub fn analyse(args: &FitArgs) -> CliResult<Analysis> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::config(format!(
            "--level {} not in (0, 1)",
            args.level
        )));
    }
    let method = args.method;
    let ci_kind = args.ci_kind();
    let mut notes = Vec::new();
    if method.is_iv() && ci_kind == CiKind::Profile {
        return Err(CliError::config(
            "profile intervals need a likelihood method (pl or mle)",
        ));
    }
    let phi_on = match (args.phi, method) {
        (Some(Switch::On), m) if m.is_iv() => {
            return Err(CliError::config("--phi applies to likelihood methods only"))
        }
        (Some(s), _) => s == Switch::On,
        (None, m) => m == MethodArg::Pl,
    };

    let records = read_records_path(&args.data)?;
    let input = Network::validate(&records, args.reference.as_deref())?;

    let include = match (args.include_all_zero, method.is_iv()) {
        (Some(YesNo::Yes), true) => {
            notes.push("all-zero studies are always excluded by iv methods".into());
            false
        }
        (_, true) => false,
        (choice, false) => choice != Some(YesNo::No),
    };
    let excluded: Vec<String> = if include {
        Vec::new()
    } else {
        input.all_zero_studies().into_iter().collect()
    };

    let (net, model) = if method.is_iv() {
        let (fit, tau2, _) = iv_nma(&input, method == MethodArg::IvRandom)?;
        (input.clone(), Model::Iv { fit, tau2 })
    } else {
        let net = if include {
            input.clone()
        } else {
            input.drop_all_zero_studies()?
        };
        let opts = if method == MethodArg::Pl {
            FitOptions::penalized()
        } else {
            FitOptions::unpenalized()
        };
        let fit = plnma::fit(&net, &opts)?;
        if !fit.converged {
            return Err(plnma::Error::NotConvergedFit.into());
        }
        (net, Model::Likelihood(fit))
    };

    let phi = match &model {
        Model::Likelihood(fit) if phi_on => Some(fletcher_phi(fit, &net, args.df_mode())?),
        _ => None,
    };
    if phi.is_some() && ci_kind == CiKind::Profile {
        notes.push("profile intervals are not scaled by phi; phi is reported for reference".into());
    }

    Ok(Analysis {
        method,
        ci_kind,
        level: args.level,
        input,
        net,
        all_zero_included: include,
        excluded,
        model,
        phi,
        notes,
    })
}

impl Analysis {
    pub fn reference(&self) -> &str {
        self.input.reference_label()
    }

    pub fn effects(&self) -> TreatmentEffects {
        match &self.model {
            Model::Likelihood(fit) => fit.effects(),
            Model::Iv { fit, .. } => fit.effects().clone(),
        }
    }

    /// φ multiplying Wald variances.
    pub fn phi_applied(&self) -> f64 {
        self.phi.map_or(1.0, |p| p.phi)
    }

    pub fn league(&self) -> CliResult<ContrastTable> {
        let phi = self.phi_applied();
        Ok(match &self.model {
            Model::Likelihood(fit) => league_table(&self.net, fit, self.ci_kind, self.level, phi)?,
            Model::Iv { fit, .. } => wald_table(fit.effects(), self.level, 1.0)?,
        })
    }

    pub fn contrast(&self, t1: &str, t2: &str) -> CliResult<ContrastRow> {
        let effects = self.effects();
        effects.index(t1)?;
        effects.index(t2)?;
        if t1 == t2 {
            return Ok(ContrastRow {
                t1: t1.into(),
                t2: t2.into(),
                estimate: 0.0,
                se: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                ci_kind: self.ci_kind,
                phi_applied: 1.0,
            });
        }
        match (&self.model, self.ci_kind) {
            (Model::Likelihood(fit), CiKind::Profile) => {
                let c = effects.contrast(t1, t2)?;
                let p = profile_contrast(&self.net, fit, t1, t2, self.level)?;
                Ok(ContrastRow {
                    t1: t1.into(),
                    t2: t2.into(),
                    estimate: c.estimate,
                    se: c.se,
                    ci_low: p.interval.low,
                    ci_high: p.interval.high,
                    ci_kind: CiKind::Profile,
                    phi_applied: 1.0,
                })
            }
            _ => {
                let phi = self.phi_applied();
                let c = effects.scale_covariance(phi).contrast(t1, t2)?;
                let ci = wald_interval(c.estimate, c.se, self.level)?;
                Ok(ContrastRow {
                    t1: t1.into(),
                    t2: t2.into(),
                    estimate: c.estimate,
                    se: c.se,
                    ci_low: ci.low,
                    ci_high: ci.high,
                    ci_kind: CiKind::Wald,
                    phi_applied: phi,
                })
            }
        }
    }
}
