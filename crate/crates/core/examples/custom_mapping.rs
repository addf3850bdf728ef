//! Ingesting a dump whose layout differs from the bundled mappings.
//!
//! Mappings are small TOML documents: where the records live, which fields
//! hold id, name and homepage, and how to read claims out of a field.

use registry_dedup::ingest::{ingest_dump, FieldMapping};

const MAPPING: &str = r#"
registry = "re3data"
format = "json"
records = "hits"
id = "meta.r3d"
name = "meta.title"
homepage = "links.home"

[[claims]]
path = "xrefs[]"
target = "fairsharing"
pattern = '^fs-(\d+)$'

[[claims]]
path = "xrefs[]"
target = "opendoar"
pattern = '^doar/(\d+)$'
"#;

const DUMP: &str = r#"{
  "hits": [
    {"meta": {"r3d": "r3d100010191", "title": "Protein Data Bank"},
     "links": {"home": "https://www.rcsb.org/"},
     "xrefs": ["fs-2114", "doi:10.1234/x"]},
    {"meta": {"r3d": "r3d100011201", "title": "Marine Data Archive"},
     "links": {"home": "marine.example.org"},
     "xrefs": ["doar/4194"]},
    {"meta": {"title": "no identifier here"}}
  ]
}"#;

fn main() -> anyhow::Result<()> {
    let mapping = FieldMapping::from_toml_str(MAPPING)?;
    let out = ingest_dump(DUMP.as_bytes(), &mapping)?;

    for p in &out.profiles {
        let claims: Vec<String> = p.claims.iter().map(ToString::to_string).collect();
        println!(
            "{}  {:<22} {:<32} -> [{}]",
            p.id,
            p.name,
            p.url.as_deref().unwrap_or("-"),
            claims.join(", ")
        );
    }
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    Ok(())
}
