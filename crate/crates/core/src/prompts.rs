//! Prompt templates. The text lives in `prompts/*.txt` and is compiled in;
//! placeholders are written `{{name}}`. Every task prompt starts with a
//! `TASK: <name>` line that scripted mocks match on.

pub const PROMPT_VERSION: u32 = 1;

pub const SYSTEM: &str = include_str!("../prompts/system.txt");
pub const EXTRACT_ENTITIES: &str = include_str!("../prompts/extract_entities.txt");
pub const EXTRACT_TRIPLES: &str = include_str!("../prompts/extract_triples.txt");
pub const SELECT_ENTITIES: &str = include_str!("../prompts/select_entities.txt");
pub const PRUNE: &str = include_str!("../prompts/prune.txt");
pub const FETCH_REFERENCES: &str = include_str!("../prompts/fetch_references.txt");
pub const REASONING_CHECK: &str = include_str!("../prompts/reasoning_check.txt");
pub const ANSWER: &str = include_str!("../prompts/answer.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");

/// Substitutes `{{key}}` placeholders. Unknown keys are left untouched.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(key);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
