use super::mask::MaskedSentence;
use crate::corpus::Sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateName {
    MaskFill,
    Paraphrase,
    Score,
}

/// A prompt with `<slot>` placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub template: &'static str,
    slots: &'static [&'static str],
}

pub const MASK_FILL: PromptTemplate = PromptTemplate {
    name: TemplateName::MaskFill,
    template: include_str!("../../assets/prompts/mask_fill.txt"),
    slots: &["masked-sentence"],
};

pub const PARAPHRASE: PromptTemplate = PromptTemplate {
    name: TemplateName::Paraphrase,
    template: include_str!("../../assets/prompts/paraphrase.txt"),
    slots: &["sentence1"],
};

pub const SCORE: PromptTemplate = PromptTemplate {
    name: TemplateName::Score,
    template: include_str!("../../assets/prompts/score.txt"),
    slots: &["sentence1", "sentence2"],
};

impl PromptTemplate {
    /// Fill slots in a single left-to-right pass, so slot values are never
    /// themselves scanned for placeholders. `values` follow the slot order.
    pub fn render(&self, values: &[&str]) -> String {
        assert_eq!(values.len(), self.slots.len(), "slot count mismatch");
        let mut out = String::with_capacity(self.template.len() + values.iter().map(|v| v.len()).sum::<usize>());
        let mut rest = self.template;
        'scan: while !rest.is_empty() {
            if rest.starts_with('<') {
                for (slot, value) in self.slots.iter().zip(values) {
                    let tail = &rest[1..];
                    if tail.starts_with(slot) && tail[slot.len()..].starts_with('>') {
                        out.push_str(value);
                        rest = &tail[slot.len() + 1..];
                        continue 'scan;
                    }
                }
            }
            let ch = rest.chars().next().expect("nonempty");
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
        out
    }
}

/// Mask-fill prompt for masked sentences, paraphrase prompt at mask rate 0.
pub fn render_generation_prompt(masked: &MaskedSentence, original: &Sentence) -> String {
    if masked.mask_rate > 0.0 {
        MASK_FILL.render(&[&masked.text()])
    } else {
        PARAPHRASE.render(&[&original.text])
    }
}

pub fn render_scoring_prompt(a: &str, b: &str) -> String {
    SCORE.render(&[a, b])
}
