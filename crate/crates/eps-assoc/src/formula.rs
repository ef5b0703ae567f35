//! Model formulas such as `y ~ e:sex,age + g:SNP1 + eg:sex*SNP1`.
//!
//! `e:` lists covariate columns, `g:` lists SNP IDs and `eg:` lists
//! covariate-by-SNP products. An interaction brings in its main effects.
//! `y ~ 1` is the intercept-only model.

use eps_core::model::{Dataset, Genotype, ModelSpec, Term};

use crate::error::{AppError, AppResult};
use crate::io::{PhenoTable, SnpRecord};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TermRef {
    Env(String),
    Snp(String),
    Interaction(String, String),
}

impl std::fmt::Display for TermRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TermRef::Env(e) => write!(f, "e:{e}"),
            TermRef::Snp(g) => write!(f, "g:{g}"),
            TermRef::Interaction(e, g) => write!(f, "eg:{e}*{g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub response: String,
    pub env: Vec<String>,
    pub snps: Vec<String>,
    pub interactions: Vec<(String, String)>,
}

fn bad(msg: impl Into<String>) -> AppError {
    AppError::Validation(format!("formula: {}", msg.into()))
}

fn name(s: &str) -> AppResult<String> {
    let s = s.trim();
    if s.is_empty()
        || s.chars()
            .any(|c| c.is_whitespace() || matches!(c, '+' | '~' | ':' | ',' | '*'))
    {
        return Err(bad(format!("`{s}` is not a valid column name")));
    }
    Ok(s.to_string())
}

/// Parses a `+`-separated list of `e:`, `g:` and `eg:` groups.
pub fn parse_terms(rhs: &str) -> AppResult<Vec<TermRef>> {
    let mut out: Vec<TermRef> = Vec::new();
    let rhs = rhs.trim();
    if rhs.is_empty() || rhs == "1" {
        return Ok(out);
    }
    for group in rhs.split('+') {
        let group = group.trim();
        if group == "1" {
            continue;
        }
        let (kind, list) = group
            .split_once(':')
            .ok_or_else(|| bad(format!("`{group}` needs a prefix e:, g: or eg:")))?;
        for item in list.split(',') {
            let t = match kind.trim() {
                "e" => TermRef::Env(name(item)?),
                "g" => TermRef::Snp(name(item)?),
                "eg" => {
                    let (e, g) = item
                        .split_once('*')
                        .ok_or_else(|| bad(format!("interaction `{item}` must look like env*snp")))?;
                    TermRef::Interaction(name(e)?, name(g)?)
                }
                k => return Err(bad(format!("unknown term prefix `{k}:`"))),
            };
            if out.contains(&t) {
                return Err(bad(format!("term {t} appears twice")));
            }
            out.push(t);
        }
    }
    Ok(out)
}

impl Formula {
    pub fn parse(s: &str) -> AppResult<Self> {
        let (lhs, rhs) = s.split_once('~').ok_or_else(|| bad("missing `~`"))?;
        let response = name(lhs)?;
        let mut f = Formula {
            response,
            env: Vec::new(),
            snps: Vec::new(),
            interactions: Vec::new(),
        };
        for t in parse_terms(rhs)? {
            f.add(t);
        }
        Ok(f)
    }

    fn add(&mut self, t: TermRef) {
        let push = |v: &mut Vec<String>, s: &String| {
            if !v.contains(s) {
                v.push(s.clone());
            }
        };
        match &t {
            TermRef::Env(e) => push(&mut self.env, e),
            TermRef::Snp(g) => push(&mut self.snps, g),
            TermRef::Interaction(e, g) => {
                push(&mut self.env, e);
                push(&mut self.snps, g);
                if !self.interactions.contains(&(e.clone(), g.clone())) {
                    self.interactions.push((e.clone(), g.clone()));
                }
            }
        }
    }

    pub fn terms(&self) -> Vec<TermRef> {
        self.env
            .iter()
            .map(|e| TermRef::Env(e.clone()))
            .chain(self.snps.iter().map(|g| TermRef::Snp(g.clone())))
            .chain(
                self.interactions
                    .iter()
                    .map(|(e, g)| TermRef::Interaction(e.clone(), g.clone())),
            )
            .collect()
    }

    /// Terms tested by default: every SNP and interaction term.
    pub fn default_tested(&self) -> Vec<TermRef> {
        self.terms()
            .into_iter()
            .filter(|t| !matches!(t, TermRef::Env(_)))
            .collect()
    }
}

/// A dataset assembled from input tables for one formula.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub data: Dataset,
    pub spec: ModelSpec,
}

/// Builds the dataset holding exactly the formula's columns, in formula
/// order, and the model with `tested` marked.
pub fn assemble(
    pheno: &PhenoTable,
    snps: &[SnpRecord],
    formula: &Formula,
    tested: &[TermRef],
    strata: Option<&str>,
) -> AppResult<Assembled> {
    let mut ds = Dataset::new(pheno.numeric(&formula.response)?)?;
    for e in &formula.env {
        ds = ds.with_env(e.as_str(), pheno.numeric(e)?)?;
    }
    for g in &formula.snps {
        let rec = snps
            .iter()
            .find(|r| &r.id == g)
            .ok_or_else(|| AppError::Validation(format!("SNP `{g}` is not in the genotype file")))?;
        ds = ds.with_snp(g.as_str(), rec.genotypes.clone())?;
    }
    if let Some(s) = strata {
        ds = ds.with_strata(pheno.strata(s)?)?;
    }
    let spec = model_spec(&ds, formula, tested)?;
    Ok(Assembled { data: ds, spec })
}

/// Resolves names against a dataset whose columns follow the formula.
pub fn model_spec(ds: &Dataset, formula: &Formula, tested: &[TermRef]) -> AppResult<ModelSpec> {
    let env = |n: &str| {
        ds.env_index(n)
            .ok_or_else(|| AppError::Validation(format!("covariate `{n}` is not in the dataset")))
    };
    let snp = |n: &str| {
        ds.snp_index(n)
            .ok_or_else(|| AppError::Validation(format!("SNP `{n}` is not in the dataset")))
    };
    let resolve = |t: &TermRef| -> AppResult<Term> {
        Ok(match t {
            TermRef::Env(e) => Term::Env(env(e)?),
            TermRef::Snp(g) => Term::Snp(snp(g)?),
            TermRef::Interaction(e, g) => Term::Interaction {
                env: env(e)?,
                snp: snp(g)?,
            },
        })
    };
    let terms = formula.terms();
    for t in tested {
        if !terms.contains(t) {
            return Err(AppError::Validation(format!("tested term {t} is not in the formula")));
        }
    }
    let spec = ModelSpec::new(
        formula.env.iter().map(|e| env(e)).collect::<AppResult<_>>()?,
        formula.snps.iter().map(|g| snp(g)).collect::<AppResult<_>>()?,
        formula
            .interactions
            .iter()
            .map(|(e, g)| Ok((env(e)?, snp(g)?)))
            .collect::<AppResult<_>>()?,
    )?;
    Ok(spec.with_tested(tested.iter().map(resolve).collect::<AppResult<_>>()?)?)
}

/// Number of missing genotypes in a record.
pub fn n_missing(genotypes: &[Genotype]) -> usize {
    genotypes.iter().filter(|g| g.is_missing()).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_formula() {
        let f = Formula::parse("y ~ e:sex,age + g:SNP1 + eg:sex*SNP1").unwrap();
        assert_eq!(f.response, "y");
        assert_eq!(f.env, ["sex", "age"]);
        assert_eq!(f.snps, ["SNP1"]);
        assert_eq!(f.interactions, [(String::from("sex"), String::from("SNP1"))]);
        assert_eq!(f.default_tested().len(), 2);
    }

    #[test]
    fn interaction_adds_main_effects() {
        let f = Formula::parse("bmi ~ eg:smoke*rs7").unwrap();
        assert_eq!(f.env, ["smoke"]);
        assert_eq!(f.snps, ["rs7"]);
    }

    #[test]
    fn intercept_only_and_errors() {
        assert!(Formula::parse("y ~ 1").unwrap().terms().is_empty());
        assert!(Formula::parse("y e:x").is_err());
        assert!(Formula::parse("y ~ x").is_err());
        assert!(Formula::parse("y ~ q:x").is_err());
        assert!(Formula::parse("y ~ eg:x").is_err());
        assert!(Formula::parse("y ~ e:x + e:x").is_err());
    }

    #[test]
    fn test_terms_share_the_syntax() {
        let t = parse_terms("g:SNP1 + eg:sex*SNP1").unwrap();
        assert_eq!(
            t,
            [
                TermRef::Snp(String::from("SNP1")),
                TermRef::Interaction(String::from("sex"), String::from("SNP1"))
            ]
        );
    }
}
