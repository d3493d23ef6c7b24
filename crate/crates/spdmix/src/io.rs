//! File formats: quote CSV ingestion and model document persistence.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpdError};
use crate::estimator::{FitResult, Quote};
use crate::pricing::{MarketContext, MixtureComponent, MixtureModel};

/// One parsed CSV row. `weight` defaults to 1 when the column is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteFileRow {
    pub strike: f64,
    pub price: f64,
    pub weight: f64,
    pub put_price: Option<f64>,
}

impl QuoteFileRow {
    pub fn to_quote(&self) -> Result<Quote> {
        Quote::new(self.strike, self.price, self.weight)
    }
}

const KNOWN_COLUMNS: [&str; 4] = ["strike", "price", "weight", "put_price"];

/// Parse quotes from CSV text: a header row naming columns out of
/// {strike, price, weight, put_price}, '.' decimals, '#' comment lines
/// and blank lines skipped.
pub fn parse_quotes_csv<R: BufRead>(reader: R) -> Result<Vec<QuoteFileRow>> {
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();

        let header = match &header {
            Some(h) => h,
            None => {
                let cols: Vec<String> = fields.iter().map(|f| f.to_lowercase()).collect();
                for c in &cols {
                    if !KNOWN_COLUMNS.contains(&c.as_str()) {
                        return Err(SpdError::Parse {
                            line: line_no,
                            message: format!("unknown column '{c}'"),
                        });
                    }
                }
                for required in ["strike", "price"] {
                    if !cols.iter().any(|c| c == required) {
                        return Err(SpdError::MissingColumn(required.into()));
                    }
                }
                header = Some(cols);
                continue;
            }
        };

        if fields.len() != header.len() {
            return Err(SpdError::Parse {
                line: line_no,
                message: format!(
                    "expected {} fields, found {}",
                    header.len(),
                    fields.len()
                ),
            });
        }
        let mut row = QuoteFileRow { strike: 0.0, price: 0.0, weight: 1.0, put_price: None };
        for (col, field) in header.iter().zip(&fields) {
            let value: f64 = field.parse().map_err(|_| SpdError::Parse {
                line: line_no,
                message: format!("malformed numeric field '{field}' in column '{col}'"),
            })?;
            match col.as_str() {
                "strike" => row.strike = value,
                "price" => row.price = value,
                "weight" => row.weight = value,
                "put_price" => row.put_price = Some(value),
                _ => unreachable!(),
            }
        }
        if !(row.strike > 0.0) {
            return Err(SpdError::Parse {
                line: line_no,
                message: format!("strike must be > 0, got {}", row.strike),
            });
        }
        if row.price < 0.0 || row.weight < 0.0 {
            return Err(SpdError::Parse {
                line: line_no,
                message: "price and weight must be nonnegative".into(),
            });
        }
        rows.push(row);
    }

    if header.is_none() || rows.is_empty() {
        return Err(SpdError::EmptyFile);
    }
    Ok(rows)
}

pub fn read_quotes_file(path: &Path) -> Result<Vec<QuoteFileRow>> {
    let file = std::fs::File::open(path)?;
    parse_quotes_csv(std::io::BufReader::new(file))
}

/// Cross-validation trace stored alongside a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvDiagnostics {
    pub sigma_grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub mu: f64,
    pub pi: f64,
}

/// Serialized fitted model, versioned for forward compatibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub market: MarketContext,
    pub sigma_floor: f64,
    pub components: Vec<ComponentEntry>,
    pub diagnostics: FitDiagnostics,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl ModelDocument {
    pub fn from_fit(result: &FitResult, sigma_floor: f64, cv: Option<CvDiagnostics>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            market: result.model.context,
            sigma_floor,
            components: result
                .model
                .components
                .iter()
                .zip(&result.model.weights)
                .map(|(c, &pi)| ComponentEntry { mu: c.mu, pi })
                .collect(),
            diagnostics: FitDiagnostics {
                objective: result.objective,
                kkt_residual: result.kkt_residual,
                iterations_used: result.iterations_used,
                cv,
            },
        }
    }

    /// Reconstruct the pricing model. Component sigmas equal the stored floor.
    pub fn to_model(&self) -> Result<MixtureModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(SpdError::InvalidModel(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let components = self
            .components
            .iter()
            .map(|e| MixtureComponent::new(e.mu, self.sigma_floor))
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<f64> = self.components.iter().map(|e| e.pi).collect();
        MixtureModel::new(components, weights, self.market)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(SpdError::InvalidModel(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, FitConfig};
    use crate::pricing::bs_call_price;
    use std::io::Cursor;

    #[test]
    fn minimal_quote_file() {
        let rows = parse_quotes_csv(Cursor::new("strike,price\n1000,372.5\n")).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].strike, 1000.0);
        assert_eq!(rows[0].price, 372.5);
        assert_eq!(rows[0].weight, 1.0);
        assert_eq!(rows[0].put_price, None);
    }

    #[test]
    fn weight_column_and_comments() {
        let text = "# quotes\nstrike,price,weight\n\n1000,372.5,2.0\n1100, 290.0 ,1.5\n";
        let rows = parse_quotes_csv(Cursor::new(text)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].weight, 2.0);
        assert_eq!(rows[1].price, 290.0);
    }

    #[test]
    fn malformed_field_names_its_line() {
        let err = parse_quotes_csv(Cursor::new("strike,price\n1000,abc\n")).unwrap_err();
        match err {
            SpdError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_and_unknown_columns() {
        assert!(matches!(
            parse_quotes_csv(Cursor::new("strike,premium\n1,2\n")),
            Err(SpdError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_quotes_csv(Cursor::new("strike,weight\n1,2\n")),
            Err(SpdError::MissingColumn(_))
        ));
        assert!(matches!(
            parse_quotes_csv(Cursor::new("")),
            Err(SpdError::EmptyFile)
        ));
        assert!(matches!(
            parse_quotes_csv(Cursor::new("strike,price\n")),
            Err(SpdError::EmptyFile)
        ));
    }

    #[test]
    fn model_document_roundtrip_is_byte_identical() {
        let ctx = MarketContext::new(1365.0, 0.045, 0.025, 30.0 / 365.0).unwrap();
        let quotes: Vec<Quote> = (0..15)
            .map(|i| {
                let x = 1050.0 + 40.0 * i as f64;
                Quote::unit(x, bs_call_price(&ctx, x, 0.27).unwrap()).unwrap()
            })
            .collect();
        let sigma = 0.22 * ctx.tau.sqrt();
        let cfg = FitConfig::for_market(&ctx, sigma);
        let result = fit(&quotes, &ctx, &cfg).unwrap();
        let doc = ModelDocument::from_fit(&result, sigma, None);

        let json = doc.to_json().unwrap();
        let parsed = ModelDocument::from_json(&json).unwrap();
        assert_eq!(parsed.to_json().unwrap(), json);

        // Prices reproduce to 1e-12 after the round trip.
        let a = doc.to_model().unwrap();
        let b = parsed.to_model().unwrap();
        for &x in &[1100.0, 1365.0, 1600.0] {
            let pa = a.call_price(x).unwrap();
            let pb = b.call_price(x).unwrap();
            assert!((pa - pb).abs() <= 1e-12 * (1.0 + pa.abs()));
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let ctx = MarketContext::new(100.0, 0.0, 0.0, 1.0).unwrap();
        let doc = ModelDocument {
            format_version: 99,
            market: ctx,
            sigma_floor: 0.2,
            components: vec![ComponentEntry { mu: 0.0, pi: 1.0 }],
            diagnostics: FitDiagnostics {
                objective: 0.0,
                kkt_residual: 0.0,
                iterations_used: 0,
                cv: None,
            },
        };
        let json = serde_json::to_string(&doc).unwrap();
        assert!(matches!(
            ModelDocument::from_json(&json),
            Err(SpdError::InvalidModel(_))
        ));
    }
}
