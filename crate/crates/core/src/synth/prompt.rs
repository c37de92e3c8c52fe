use std::path::Path;

use regex::Regex;
use std::sync::LazyLock;

use super::SynthError;
use crate::corpus::QueryMode;
use crate::hashing::sha256_hex;

pub const PARAPHRASE_TEMPLATE: &str = "\
Your task is to generate {M} paraphrase queries based on the document(s).
- Identify ONE main question the document(s) answer
- Then rephrase it {M} different ways
All queries must ask the SAME question with DIFFERENT wording.
Document(s): {document}
Generate {M} queries: 1.";

pub const DIVERSE_TEMPLATE: &str = "\
Your task is to generate {M} independent queries based on the document(s).
You MUST generate queries in these specific formats:
- What... questions (factual)
- How... questions (procedural)
- Why... questions (causal)
- When/If... questions (conditional)
- Keyword queries (2-5 words, no question mark)
- Statement/claim format (e.g., \"X is used for Y\")
- Which/Is it true... questions
- Comparison or contrast questions
Each query must target different information from the document.
Document(s): {document}
Generate {M} queries: 1.";

const SUFFIX: &str = "Generate {M} queries: 1.";

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[A-Za-z_][A-Za-z0-9_]*\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub mode: QueryMode,
    pub body: String,
}

impl PromptTemplate {
    /// Checks that `body` uses only `{M}` and `{document}`, includes the
    /// document, and ends with the numbered-list cue.
    pub fn new(mode: QueryMode, body: impl Into<String>) -> Result<Self, SynthError> {
        let body: String = body.into();
        let trimmed = body.trim_end();
        if !trimmed.ends_with(SUFFIX) {
            return Err(SynthError::Template(format!("template must end with {SUFFIX:?}")));
        }
        if !body.contains("{document}") {
            return Err(SynthError::Template("template has no {document} placeholder".into()));
        }
        if let Some(m) = PLACEHOLDER
            .find_iter(&body)
            .find(|m| m.as_str() != "{M}" && m.as_str() != "{document}")
        {
            return Err(SynthError::UnresolvedPlaceholder(m.as_str().to_string()));
        }
        Ok(Self {
            mode,
            body: trimmed.to_string(),
        })
    }

    pub fn builtin(mode: QueryMode) -> Self {
        let body = match mode {
            QueryMode::Diverse => DIVERSE_TEMPLATE,
            QueryMode::Paraphrase => PARAPHRASE_TEMPLATE,
        };
        Self::new(mode, body).expect("built-in templates are valid")
    }

    pub fn from_file(mode: QueryMode, path: &Path) -> Result<Self, SynthError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Template(format!("cannot read {}: {e}", path.display())))?;
        Self::new(mode, body)
    }

    /// SHA-256 of the template body.
    pub fn prompt_hash(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }

    /// Substitutes `{M}` first and `{document}` last, so braces inside the
    /// document text are left alone.
    pub fn render(&self, m: usize, document: &str) -> Result<String, SynthError> {
        if m == 0 {
            return Err(SynthError::Config("M must be at least 1".into()));
        }
        if document.trim().is_empty() {
            return Err(SynthError::Config("document text is empty".into()));
        }
        let with_m = self.body.replace("{M}", &m.to_string());
        if let Some(p) = PLACEHOLDER.find_iter(&with_m).find(|p| p.as_str() != "{document}") {
            return Err(SynthError::UnresolvedPlaceholder(p.as_str().to_string()));
        }
        Ok(with_m.replace("{document}", document))
    }
}

pub fn render_prompt(template: &PromptTemplate, m: usize, document: &str) -> Result<String, SynthError> {
    template.render(m, document)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diverse_rendering() {
        let t = PromptTemplate::builtin(QueryMode::Diverse);
        let p = t.render(3, "doc").unwrap();
        assert!(p.contains("generate 3 independent queries"));
        assert!(p.ends_with("Generate 3 queries: 1."));
        assert!(p.contains("Document(s): doc\n"));
        assert_eq!(p.lines().filter(|l| l.starts_with("- ")).count(), 8);
        assert_eq!(p, t.render(3, "doc").unwrap());
        assert!(!p.contains('{'));
    }

    #[test]
    fn paraphrase_rendering() {
        let p = PromptTemplate::builtin(QueryMode::Paraphrase).render(2, "doc").unwrap();
        assert!(p.contains("SAME question") && p.contains("DIFFERENT wording"));
        assert!(p.contains("rephrase it 2 different ways"));
        assert!(p.ends_with("Generate 2 queries: 1."));
    }

    #[test]
    fn document_braces_survive() {
        let p = PromptTemplate::builtin(QueryMode::Paraphrase)
            .render(2, "set {M} and {foo}")
            .unwrap();
        assert!(p.contains("Document(s): set {M} and {foo}"));
    }

    #[test]
    fn invalid_templates() {
        assert!(matches!(
            PromptTemplate::new(QueryMode::Diverse, "Document(s): {document} {lang}\nGenerate {M} queries: 1."),
            Err(SynthError::UnresolvedPlaceholder(p)) if p == "{lang}"
        ));
        assert!(PromptTemplate::new(QueryMode::Diverse, "no doc\nGenerate {M} queries: 1.").is_err());
        assert!(PromptTemplate::new(QueryMode::Diverse, "{document} give me queries").is_err());
        let t = PromptTemplate::builtin(QueryMode::Diverse);
        assert!(t.render(0, "doc").is_err());
        assert!(t.render(2, "  ").is_err());
    }

    #[test]
    fn prompt_hash_tracks_body() {
        let a = PromptTemplate::builtin(QueryMode::Diverse);
        let b = PromptTemplate::builtin(QueryMode::Paraphrase);
        assert_ne!(a.prompt_hash(), b.prompt_hash());
        assert_eq!(a.prompt_hash().len(), 64);
    }
}
