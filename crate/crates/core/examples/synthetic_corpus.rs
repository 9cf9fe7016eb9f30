//! Writes the bundled 500-record synthetic corpus and its abstract resolver
//! file.
//!
//! ```text
//! cargo run -p stance-core --example synthetic_corpus -- crates/core/data
//! ```
//!
//! The output is a pure function of the seed. Every screening exclusion
//! reason is represented, and a slice of records ships without an abstract so
//! abstract recovery has work to do.

use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 500;
const SEED: u64 = 20_240_601;

const JOURNALS: &[&str] = &[
    "Clinical Infectious Diseases",
    "Journal of Infectious Diseases",
    "Ticks and Tick-borne Diseases",
    "Vector-Borne and Zoonotic Diseases",
    "Frontiers in Medicine",
    "Healthcare",
    "Antibiotics",
    "Pathogens",
    "Frontiers in Neurology",
    "Emerging Infectious Diseases",
    "The American Journal of Medicine",
    "Journal of Clinical Microbiology",
    "Infection and Immunity",
    "BMC Infectious Diseases",
    "PLoS ONE",
    "Neurology",
    "Journal of Neuroinflammation",
    "European Journal of Clinical Microbiology & Infectious Diseases",
    "International Journal of General Medicine",
    "Microorganisms",
    "Open Forum Infectious Diseases",
    "Brain, Behavior, and Immunity",
    "Qualitative Health Research",
    "Journal of Medical Ethics",
];

const TYPES: &[&str] = &["Article", "Review", "Article", "Article", "Letter"];

const OPENERS: &[&str] = &[
    "Lyme disease, caused by Borrelia burgdorferi and transmitted by Ixodes ticks, is the most common vector-borne infection in temperate regions.",
    "A subset of patients treated for Lyme disease report fatigue, pain and cognitive complaints that persist for months after therapy.",
    "Erythema migrans is the hallmark of early Lyme borreliosis, yet many infections go unrecognised until later manifestations appear.",
    "Tick-borne infections have become a growing public health concern as the range of Ixodes vectors expands.",
    "The persistence of symptoms after standard antibiotic treatment of Lyme disease remains the subject of clinical debate.",
    "Borrelia burgdorferi has a segmented genome and an unusual capacity to vary its surface antigens during infection.",
];

const METHODS: &[&str] = &[
    "We conducted a prospective cohort study of adults with culture-confirmed early infection and followed them for two years.",
    "We reviewed the published trials of prolonged antibiotic therapy and summarised their outcomes.",
    "Semi-structured interviews were held with patients who describe themselves as having chronic symptoms after a tick bite.",
    "Serum samples were tested for antibodies, cytokines and markers of immune activation at several time points.",
    "We analysed claims data from a national insurer to estimate the incidence of persistent symptoms after treatment.",
    "Mouse and primate models were examined for residual spirochetal material after a full course of antibiotics.",
    "Neuropsychological testing and brain imaging were performed in a group of treated patients and matched controls.",
    "Persister cells and biofilm-like aggregates were studied in culture under exposure to several antibiotic classes.",
];

const FINDINGS: &[&str] = &[
    "Symptoms were associated with markers of immune activation rather than with evidence of ongoing infection, which fits a post-infectious syndrome.",
    "Additional antibiotic treatment did not improve outcomes compared with placebo and carried a measurable risk of adverse events.",
    "Viable organisms were recovered from a minority of treated hosts, suggesting that the pathogen can persist despite therapy.",
    "Patients described a long search for diagnosis and frequent disagreement between clinicians about the cause of their illness.",
    "Current serological tests performed poorly in late disease and were frequently misinterpreted in routine practice.",
    "Cognitive complaints were common but objective deficits were modest and did not differ clearly from controls.",
    "Autoantibodies against neural antigens were more frequent among patients with persistent symptoms.",
    "Combination regimens cleared persister forms in vitro more effectively than any single agent.",
    "Costs of care and loss of productivity among patients with persistent symptoms were substantial.",
];

const CLOSERS: &[&str] = &[
    "These results support further research into the mechanisms of persistent symptoms and into better diagnostic tools for clinicians and patients.",
    "Clinicians should be aware of the uncertainty surrounding this condition and communicate it openly with their patients.",
    "The findings argue for a careful, evidence-based approach to the management of patients after treatment of Lyme disease.",
    "Our data call for controlled trials that test whether targeted therapy can help patients with ongoing complaints.",
    "Better case definitions would make it easier to compare studies and to design trials with meaningful end points.",
];

const OFF_TOPIC: &[&str] = &[
    "Seasonal influenza vaccination coverage among older adults was assessed across several primary care networks over five consecutive winters.",
    "We evaluated the effect of a structured exercise programme on glycaemic control in adults with type 2 diabetes in a randomised trial.",
    "Hospital-acquired pneumonia remains a frequent complication after cardiac surgery and is associated with longer stays and higher mortality.",
    "Antimicrobial stewardship interventions in paediatric wards reduced the use of broad-spectrum agents without any increase in readmissions.",
];

const FOREIGN: &[&str] = &[
    "Die Lyme-Borreliose ist eine durch Zecken übertragene Infektionskrankheit, deren Spätfolgen seit Jahren kontrovers diskutiert werden. In dieser Studie wurden Patienten mit anhaltenden Beschwerden nach einer Antibiotikatherapie untersucht, um immunologische Marker und klinische Verläufe zu vergleichen. Die Ergebnisse sprechen für eine postinfektiöse Genese der Symptome bei einem Teil der Betroffenen.",
    "La enfermedad de Lyme es una infección transmitida por garrapatas cuyos síntomas persistentes siguen siendo objeto de debate entre clínicos y pacientes. Se estudió una cohorte de pacientes tratados con antibióticos durante cuatro semanas y se midieron marcadores inflamatorios en suero. Los resultados sugieren una respuesta inmunitaria prolongada más que una infección activa.",
    "La maladie de Lyme est une infection transmise par les tiques dont les symptômes persistants font encore l'objet de controverses. Nous avons suivi une cohorte de patients traités par antibiotiques pendant deux ans et mesuré plusieurs marqueurs immunologiques. Les résultats suggèrent une réponse immunitaire prolongée chez une partie des malades.",
];

fn abstract_text(rng: &mut ChaCha8Rng) -> String {
    let mut parts = vec![*OPENERS.choose(rng).unwrap(), *METHODS.choose(rng).unwrap()];
    let n_findings = rng.random_range(1..=2);
    for f in FINDINGS.choose_multiple(rng, n_findings) {
        parts.push(f);
    }
    parts.push(CLOSERS.choose(rng).unwrap());
    parts.join(" ")
}

fn title(rng: &mut ChaCha8Rng) -> String {
    let subjects = [
        "Persistent symptoms after treated Lyme disease",
        "Antibiotic therapy for post-treatment Lyme disease syndrome",
        "Immune activation in Lyme borreliosis",
        "Patient experiences of chronic Lyme disease",
        "Diagnosis of late Lyme disease",
        "Borrelia burgdorferi persistence",
        "Neurocognitive outcomes after Lyme neuroborreliosis",
    ];
    let framings = [
        "a cohort study",
        "a systematic review",
        "a qualitative study",
        "a randomised trial",
        "an experimental study",
        "a clinical perspective",
    ];
    format!("{}: {}", subjects.choose(rng).unwrap(), framings.choose(rng).unwrap())
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "crates/core/data".into());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut corpus = csv::Writer::from_path(out.join("synthetic_corpus.csv")).expect("create corpus file");
    let mut resolver = csv::Writer::from_path(out.join("synthetic_abstracts.csv")).expect("create resolver file");
    corpus
        .write_record([
            "record_id",
            "publication",
            "authors",
            "year",
            "type",
            "abstract",
            "cites",
            "doi",
            "title",
        ])
        .unwrap();
    resolver.write_record(["doi", "abstract"]).unwrap();

    let mut dois: Vec<String> = Vec::new();
    for i in 0..N {
        let id = format!("S{:04}", i + 1);
        let mut publication = JOURNALS.choose(&mut rng).unwrap().to_string();
        let authors = format!(
            "Author{} A; Author{} B",
            rng.random_range(1..400),
            rng.random_range(1..400)
        );
        let mut year = rng.random_range(2000..=2024).to_string();
        let pub_type = TYPES.choose(&mut rng).unwrap().to_string();
        let mut text = abstract_text(&mut rng);
        // heavy-tailed citation counts
        let u: f64 = rng.random_range(0.0..1.0);
        let cites = ((1.0 / (1.0 - u).powf(0.8)) - 1.0).floor() as u64 * 3;
        let mut doi = format!("10.{}/syn.{:05}", 1000 + i % 37, i + 1);
        let mut title = title(&mut rng);

        // deterministic slots for each kind of defect
        match i % 25 {
            0 => doi.clear(),
            1 if !dois.is_empty() => doi = dois[rng.random_range(0..dois.len())].to_uppercase(),
            2 => publication.clear(),
            3 if i % 50 == 3 => title.clear(),
            4 => {
                // abstract missing from the export; most can be recovered by DOI
                if i % 100 != 4 {
                    resolver
                        .write_record([doi.as_str(), abstract_text(&mut rng).as_str()])
                        .unwrap();
                }
                text.clear();
            }
            5 => text = "Short note on Lyme disease serology.".into(),
            6 => {
                text = format!("{} {} {}", OFF_TOPIC.choose(&mut rng).unwrap(), CLOSERS[1], CLOSERS[4]);
                title = "Outcomes in a primary care population: a cohort study".into();
            }
            7 => text = FOREIGN.choose(&mut rng).unwrap().to_string(),
            8 => year = if i % 50 == 8 { "1996".into() } else { "2025".into() },
            _ => {}
        }
        if !doi.is_empty() {
            dois.push(doi.to_lowercase());
        }
        corpus
            .write_record([
                id.as_str(),
                &publication,
                &authors,
                &year,
                &pub_type,
                &text,
                &cites.to_string(),
                &doi,
                &title,
            ])
            .unwrap();
    }
    corpus.flush().unwrap();
    resolver.flush().unwrap();
    println!("wrote {N} records to {}", out.display());
}
