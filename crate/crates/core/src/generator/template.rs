use super::{ChatMessage, GeneratorError, RenderedPrompt, Role};
use crate::domain::{DialogueRecord, PromptCandidate, ValueId, VALUE_PLACEHOLDER};

pub const USER_MARKER: &str = "USER:";
pub const ASSISTANT_MARKER: &str = "ASSISTANT:";

fn bind(template: &str, value: Option<&ValueId>, candidate: &PromptCandidate) -> Result<String, GeneratorError> {
    if !template.contains(VALUE_PLACEHOLDER) {
        return Ok(template.to_string());
    }
    match value {
        Some(v) => Ok(template.replace(VALUE_PLACEHOLDER, v.as_str())),
        None => Err(GeneratorError::MissingValueBinding {
            candidate: candidate.id.clone(),
        }),
    }
}

/// Renders a candidate over a dialogue with the Vicuna template:
///
/// ```text
/// <system>
/// USER: ...
/// ASSISTANT: <last dialogue turn>
/// USER: <command>
/// ASSISTANT:
/// ```
///
/// Roles are assigned backwards from the last turn, which is always the
/// assistant's. Speaker names are dropped.
pub fn render_prompt(
    candidate: &PromptCandidate,
    value: Option<&ValueId>,
    dialogue: &DialogueRecord,
) -> Result<RenderedPrompt, GeneratorError> {
    let system = bind(&candidate.system_template, value, candidate)?;
    let command = bind(&candidate.command_template, value, candidate)?;

    let mut messages = Vec::with_capacity(dialogue.turns.len() + 2);
    messages.push(ChatMessage {
        role: Role::System,
        content: system.clone(),
    });
    let last = dialogue.turns.len().saturating_sub(1);
    for (i, turn) in dialogue.turns.iter().enumerate() {
        let role = if (last - i).is_multiple_of(2) {
            Role::Assistant
        } else {
            Role::User
        };
        messages.push(ChatMessage {
            role,
            content: turn.text.clone(),
        });
    }
    messages.push(ChatMessage {
        role: Role::User,
        content: command,
    });

    let mut full_text = system;
    for message in &messages[1..] {
        let marker = match message.role {
            Role::Assistant => ASSISTANT_MARKER,
            _ => USER_MARKER,
        };
        full_text.push('\n');
        full_text.push_str(marker);
        full_text.push(' ');
        full_text.push_str(&message.content);
    }
    full_text.push('\n');
    full_text.push_str(ASSISTANT_MARKER);

    Ok(RenderedPrompt {
        full_text,
        messages,
        candidate_id: candidate.id.clone(),
        value_id: value.cloned(),
        dialogue_id: dialogue.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Turn;

    fn dialogue(texts: &[&str]) -> DialogueRecord {
        DialogueRecord::new(
            "d1",
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Turn::new(if i % 2 == 0 { "Kai" } else { "friend" }, *t))
                .collect(),
        )
    }

    fn six_turns() -> DialogueRecord {
        dialogue(&[
            "I know what she was going through was hard but this is just a temporary feeling.",
            "And she is young indeed.",
            "Everything will be okay. I'll be there for her.",
            "It must hurt so much now though.",
            "I told her that after every bad thing that happens, there is good that happens. She is a good person and good things will happen to her.",
            "Kai that was really thoughtful of you.",
        ])
    }

    #[test]
    fn candidate_prompt_layout() {
        let p = render_prompt(
            &PromptCandidate::value_conditioned(),
            Some(&ValueId::new("benevolence")),
            &six_turns(),
        )
        .unwrap();
        let expected = "You are having a conversation, your responses are based on a specific value.\n\
USER: I know what she was going through was hard but this is just a temporary feeling.\n\
ASSISTANT: And she is young indeed.\n\
USER: Everything will be okay. I'll be there for her.\n\
ASSISTANT: It must hurt so much now though.\n\
USER: I told her that after every bad thing that happens, there is good that happens. She is a good person and good things will happen to her.\n\
ASSISTANT: Kai that was really thoughtful of you.\n\
USER: Generate a short response that aligns with the value 'benevolence'.\n\
ASSISTANT:";
        assert_eq!(p.full_text, expected);
        assert!(p
            .full_text
            .ends_with("USER: Generate a short response that aligns with the value 'benevolence'.\nASSISTANT:"));
        assert_eq!(p.value_id, Some(ValueId::new("benevolence")));
        assert_eq!(p.messages.len(), 8);
        assert_eq!(p.messages[6].role, Role::Assistant);
    }

    #[test]
    fn baseline_ignores_value() {
        let d = six_turns();
        let a = render_prompt(&PromptCandidate::baseline(), Some(&ValueId::new("power")), &d).unwrap();
        let b = render_prompt(&PromptCandidate::baseline(), Some(&ValueId::new("tradition")), &d).unwrap();
        assert_eq!(a.full_text, b.full_text);
        assert!(a.full_text.starts_with("You are having a conversation.\n"));
        assert!(a.full_text.ends_with("\nUSER: Generate a short response.\nASSISTANT:"));
    }

    #[test]
    fn single_turn_is_assistant() {
        let p = render_prompt(&PromptCandidate::baseline(), None, &dialogue(&["Hello."])).unwrap();
        assert_eq!(
            p.full_text,
            "You are having a conversation.\nASSISTANT: Hello.\nUSER: Generate a short response.\nASSISTANT:"
        );
    }

    #[test]
    fn odd_length_starts_with_assistant() {
        let p = render_prompt(&PromptCandidate::baseline(), None, &dialogue(&["a", "b", "c"])).unwrap();
        assert!(p.full_text.contains("\nASSISTANT: a\nUSER: b\nASSISTANT: c\nUSER: "));
    }

    #[test]
    fn missing_binding() {
        let err = render_prompt(&PromptCandidate::value_conditioned(), None, &dialogue(&["a"])).unwrap_err();
        assert!(matches!(err, GeneratorError::MissingValueBinding { .. }));
    }

    #[test]
    fn every_placeholder_replaced() {
        let c = PromptCandidate::new("c", "Value {VALUE}.", "Say {VALUE} twice: {VALUE}.");
        let p = render_prompt(&c, Some(&ValueId::new("power")), &dialogue(&["a"])).unwrap();
        assert!(!p.full_text.contains(VALUE_PLACEHOLDER));
        assert!(p.full_text.contains("USER: Say power twice: power."));
        assert!(p.full_text.starts_with("Value power."));
    }
}
