/// Fixed part of the system prompt; the tag list follows it.
pub const SYSTEM_PROMPT_HEADER: &str = include_str!("../../data/system_prompt.txt");

/// System prompt listing `tags` as `"<id> - <tag>"` lines, ids dense from 0
/// in the given order. There is no trailing newline.
pub fn render_system_prompt(tags: &[String]) -> String {
    let mut out = String::with_capacity(SYSTEM_PROMPT_HEADER.len() + tags.len() * 16);
    out.push_str(SYSTEM_PROMPT_HEADER);
    for (i, tag) in tags.iter().enumerate() {
        out.push('\n');
        out.push_str(&format!("{i} - {tag}"));
    }
    out
}
