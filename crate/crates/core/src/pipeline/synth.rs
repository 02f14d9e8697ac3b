//! Themed synthetic email corpus with matching synthetic embeddings.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::ingest::SourceDoc;

use super::splitmix64;

pub struct Theme {
    pub name: &'static str,
    pub subjects: &'static [&'static str],
    /// Disjoint across themes.
    pub core: &'static [&'static str],
}

/// Consecutive pairs form families that share `FAMILY_WORDS` entries.
pub const THEMES: &[Theme] = &[
    Theme {
        name: "payment",
        subjects: &["Payment confirmation", "Remittance advice", "Bank transfer receipt"],
        core: &["payment", "remittance", "transfer", "bank", "swift", "funds", "beneficiary", "credited", "wire", "iban", "transaction", "settlement"],
    },
    Theme {
        name: "invoice",
        subjects: &["Invoice overdue", "New invoice attached", "Proforma invoice"],
        core: &["invoice", "overdue", "proforma", "billing", "quotation", "purchase", "order", "outstanding", "vat", "itemized", "due", "supplier"],
    },
    Theme {
        name: "voicemail",
        subjects: &["New voicemail", "You have a voice message", "Missed call"],
        core: &["voicemail", "mailbox", "voice", "missed", "caller", "duration", "listen", "recording", "extension", "playback", "unheard", "inbox"],
    },
    Theme {
        name: "fax",
        subjects: &["Incoming fax", "Fax delivery report", "Scanned fax document"],
        core: &["fax", "pages", "scanned", "scanner", "transmission", "sender", "copier", "resolution", "tiff", "station", "received", "efax"],
    },
    Theme {
        name: "photo",
        subjects: &["My photos", "Pictures from the weekend", "New images"],
        core: &["photo", "photos", "pictures", "images", "album", "camera", "gallery", "snapshot", "selfie", "holiday", "beach", "memories"],
    },
    Theme {
        name: "video",
        subjects: &["Watch this video", "Video clip for you", "Recorded meeting video"],
        core: &["video", "clip", "watch", "stream", "footage", "movie", "player", "codec", "trailer", "episode", "frames", "youtube"],
    },
    Theme {
        name: "shipping",
        subjects: &["Shipment notification", "Delivery attempt failed", "Parcel tracking"],
        core: &["shipment", "parcel", "courier", "tracking", "delivery", "package", "dispatch", "waybill", "warehouse", "consignment", "carrier", "freight"],
    },
    Theme {
        name: "customs",
        subjects: &["Customs clearance required", "Import duty notice", "Held at customs"],
        core: &["customs", "clearance", "duty", "import", "declaration", "tariff", "border", "broker", "levy", "inspection", "seized", "permit"],
    },
    Theme {
        name: "password",
        subjects: &["Password expiry notice", "Reset your password", "Account verification"],
        core: &["password", "expiry", "reset", "credentials", "login", "verify", "expire", "portal", "authentication", "username", "signin", "locked"],
    },
    Theme {
        name: "quota",
        subjects: &["Mailbox storage full", "Quota exceeded", "Storage upgrade"],
        core: &["quota", "storage", "exceeded", "capacity", "upgrade", "megabytes", "limit", "space", "administrator", "increase", "server", "usage"],
    },
    Theme {
        name: "tax",
        subjects: &["Tax refund available", "Tax return notice", "Refund eligibility"],
        core: &["tax", "refund", "return", "revenue", "eligible", "fiscal", "irs", "hmrc", "deduction", "filing", "rebate", "claim"],
    },
    Theme {
        name: "salary",
        subjects: &["Salary adjustment", "Payroll update", "Bonus letter"],
        core: &["salary", "payroll", "bonus", "raise", "compensation", "payslip", "increment", "employee", "appraisal", "wages", "hr", "benefits"],
    },
    Theme {
        name: "job",
        subjects: &["Job offer", "Interview invitation", "Your application"],
        core: &["job", "offer", "interview", "position", "vacancy", "candidate", "resume", "recruiter", "hiring", "role", "career", "applicant"],
    },
    Theme {
        name: "contract",
        subjects: &["Contract for signature", "Agreement draft", "Signed contract copy"],
        core: &["contract", "agreement", "signature", "clause", "terms", "draft", "sign", "legal", "parties", "amendment", "docusign", "witness"],
    },
    Theme {
        name: "lottery",
        subjects: &["Congratulations winner", "Lottery results", "Prize notification"],
        core: &["lottery", "winner", "prize", "jackpot", "ticket", "draw", "won", "sweepstake", "lucky", "award", "promotion", "million"],
    },
    Theme {
        name: "inheritance",
        subjects: &["Inheritance claim", "Estate of the deceased", "Next of kin"],
        core: &["inheritance", "estate", "deceased", "kin", "barrister", "beneficiaries", "will", "late", "relative", "trustee", "probate", "heir"],
    },
];

const FAMILY_WORDS: &[&[&str]] = &[
    &["account", "amount", "finance", "accounting", "balance", "statement", "payable", "ledger"],
    &["message", "communication", "device", "phone", "number", "line", "notification", "telecom"],
    &["media", "view", "download", "share", "upload", "preview", "viewer", "shared"],
    &["logistics", "goods", "address", "express", "international", "fee", "label", "dhl"],
    &["email", "security", "update", "webmail", "office365", "helpdesk", "outlook", "microsoft"],
    &["money", "annual", "government", "income", "pay", "year", "form", "personal"],
    &["company", "document", "review", "business", "partner", "proposal", "project", "corporate"],
    &["fortune", "fund", "release", "claimant", "foundation", "charity", "donation", "usd"],
];

const NOISE_WORDS: &[&str] = &[
    "kindly", "regarding", "attached", "find", "below", "team", "office", "today", "soon", "request", "information",
    "details", "notice", "contact", "support", "following", "confirm", "attention", "department", "reference",
    "asap", "sincerely", "manager", "customer", "service", "link", "click", "open", "file", "archive",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_templates: usize,
    pub docs_per_template: usize,
    pub dim: usize,
    pub sigma: f64,
    /// Templates per family; siblings share part of their embedding direction.
    pub family_size: usize,
    /// Squared cosine between sibling template means, in [0, 1).
    pub family_weight: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_templates: 12,
            docs_per_template: 100,
            dim: 64,
            sigma: 0.15,
            family_size: 2,
            family_weight: 0.55,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub sources: Vec<SourceDoc>,
    pub embeddings: EmbeddingMatrix,
    /// Template index per document.
    pub truth: Vec<usize>,
    pub template_names: Vec<String>,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn template_words(t: usize) -> (Vec<String>, Vec<String>, String) {
    let theme = &THEMES[t % THEMES.len()];
    let round = t / THEMES.len();
    let suffix = |w: &str| if round == 0 { w.to_string() } else { format!("{w}{}", round + 1) };
    let core = theme.core.iter().map(|w| suffix(w)).collect();
    let subjects = theme.subjects.iter().map(|s| s.to_string()).collect();
    (core, subjects, suffix(theme.name))
}

/// Documents are shuffled; `truth[i]` is the template of document `i`.
/// Template `t` embeds around a unit mean direction seeded from
/// `(seed, t)` with isotropic noise of standard deviation `sigma` per
/// coordinate. Templates beyond the built-in themes reuse them with
/// numbered vocabulary, so core vocabularies stay disjoint.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> SyntheticCorpus {
    let n_templates = cfg.n_templates.max(2);
    let family_size = cfg.family_size.max(1);
    let w = cfg.family_weight.clamp(0.0, 0.999);
    let direction = |key: u64| unit_gaussian(&mut ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ key)), cfg.dim);
    let means: Vec<Vec<f64>> = (0..n_templates)
        .map(|t| {
            let own = direction(splitmix64(t as u64 + 1));
            let family = direction(splitmix64((t / family_size) as u64 + 0x5eed_0000));
            let mixed: Vec<f64> = own
                .iter()
                .zip(&family)
                .map(|(o, f)| (1.0 - w).sqrt() * o + w.sqrt() * f)
                .collect();
            let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt();
            mixed.into_iter().map(|x| x / norm).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x7e47));
    let mut docs: Vec<(usize, String, String, Vec<f64>)> = Vec::new();
    for (t, mean) in means.iter().enumerate() {
        let (core, subjects, _) = template_words(t);
        let family = FAMILY_WORDS[(t / family_size) % FAMILY_WORDS.len()];
        for _ in 0..cfg.docs_per_template {
            let n_words = rng.random_range(25..40);
            let words: Vec<&str> = (0..n_words)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < 0.35 {
                        core.choose(&mut rng).unwrap().as_str()
                    } else if u < 0.65 {
                        family.choose(&mut rng).unwrap()
                    } else {
                        NOISE_WORDS.choose(&mut rng).unwrap()
                    }
                })
                .collect();
            let mut body = words.join(" ");
            body.push('.');
            let subject = subjects.choose(&mut rng).unwrap().clone();
            let vector = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + cfg.sigma * z
                })
                .collect();
            docs.push((t, subject, body, vector));
        }
    }
    docs.shuffle(&mut rng);

    let mut sources = Vec::with_capacity(docs.len());
    let mut rows = Vec::with_capacity(docs.len());
    let mut ids = Vec::with_capacity(docs.len());
    let mut truth = Vec::with_capacity(docs.len());
    for (i, (t, subject, body, vector)) in docs.into_iter().enumerate() {
        let id = format!("synth-{i:05}");
        sources.push(SourceDoc::Fields {
            id: id.clone(),
            subject,
            body,
        });
        ids.push(id);
        rows.push(vector);
        truth.push(t);
    }
    let embeddings = if rows.is_empty() {
        EmbeddingMatrix::empty()
    } else {
        EmbeddingMatrix::from_rows(rows, ids).expect("rows share one dimension")
    };
    SyntheticCorpus {
        sources,
        embeddings,
        truth,
        template_names: (0..n_templates).map(|t| template_words(t).2).collect(),
    }
}
