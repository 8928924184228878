use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::SplitTask;

/// Instruction template, version 1. Changing the wording changes model
/// behaviour, so edits should bump [`PROMPT_TEMPLATE_VERSION`].
pub const INSTRUCTION: &str = "Below is the LaTeX of one or more scanned pages from a volume of \
mathematical reviews. Extract the text of the review that belongs to the document with the \
given title and source. The review begins after that document's title and source and ends \
before the next document's title. Return only the review text: leave out titles, sources, \
author names, page numbers and reviewer signatures.";

pub const PROMPT_TEMPLATE_VERSION: u32 = 1;

/// Clause appended for models that were not trained on the "not reviewed"
/// convention.
pub const EMPTY_REVIEW_CLAUSE: &str = "If the review is empty, return 'Not reviewed'";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    /// Rendered task section of the example (titles, sources, LaTeX).
    pub prompt: String,
    /// The expected answer.
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptOptions {
    pub few_shot: Vec<FewShotExample>,
    pub empty_review_clause: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub instruction: String,
    pub row_title: String,
    pub row_source: String,
    pub next_title: String,
    pub next_source: String,
    pub latex_content: String,
    pub few_shot_examples: Vec<FewShotExample>,
    pub empty_review_clause: bool,
}

impl Prompt {
    /// The single user message sent to a backend.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.latex_content.len() + 1024);
        out.push_str(&self.instruction);
        if self.empty_review_clause {
            out.push(' ');
            out.push_str(EMPTY_REVIEW_CLAUSE);
            out.push('.');
        }
        out.push_str("\n\n");
        for (i, ex) in self.few_shot_examples.iter().enumerate() {
            let n = i + 1;
            let _ = write!(
                out,
                "### Example {n}\n{}\n### Answer {n}\n{}\n\n",
                ex.prompt.trim_end(),
                ex.output.trim_end()
            );
        }
        if !self.few_shot_examples.is_empty() {
            out.push_str("### Task\n");
        }
        out.push_str(&render_task_section(
            &self.row_title,
            &self.row_source,
            &self.next_title,
            &self.next_source,
            &self.latex_content,
        ));
        out
    }
}

/// Fields of one task in the order the model sees them.
pub fn render_task_section(
    row_title: &str,
    row_source: &str,
    next_title: &str,
    next_source: &str,
    latex: &str,
) -> String {
    format!(
        "Title: {row_title}\nSource: {row_source}\nNext title: {next_title}\nNext source: {next_source}\nLaTeX:\n{latex}\n"
    )
}

pub fn build_prompt(task: &SplitTask, options: &PromptOptions) -> Prompt {
    Prompt {
        instruction: INSTRUCTION.to_string(),
        row_title: task.row.preferred_title().to_string(),
        row_source: task.row.source.clone(),
        next_title: task.next_preferred_title().to_string(),
        next_source: task.next_source().to_string(),
        latex_content: task.latex_content.clone(),
        few_shot_examples: options.few_shot.clone(),
        empty_review_clause: options.empty_review_clause,
    }
}

/// Two labelled examples: one with review text, one without.
pub fn builtin_few_shot() -> Vec<FewShotExample> {
    vec![
        FewShotExample {
            prompt: render_task_section(
                "Sur les fonctions entières",
                "C. R. Acad. Sci., Paris 192, 21-23 (1931).",
                "On a class of integral equations",
                "Proc. Lond. Math. Soc. (2) 33, 1-15 (1931).",
                "Sur les fonctions entières\nC. R. Acad. Sci., Paris 192, 21-23 (1931).\n\
L'auteur démontre que toute fonction entière d'ordre fini $\\rho$ satisfait à l'inégalité \
$M(r) < e^{r^{\\rho + \\varepsilon}}$.\nG. Valiron (Paris).\n214\nOn a class of integral equations\n",
            ),
            output: "L'auteur démontre que toute fonction entière d'ordre fini $\\rho$ satisfait à \
l'inégalité $M(r) < e^{r^{\\rho + \\varepsilon}}$."
                .to_string(),
        },
        FewShotExample {
            prompt: render_task_section(
                "Tables of the function $\\Gamma(x)$",
                "Math. Tables 3, 40 p. (1931).",
                "Über die Nullstellen der Zetafunktion",
                "Math. Z. 33, 100-110 (1931).",
                "Tables of the function $\\Gamma(x)$\nMath. Tables 3, 40 p. (1931).\n\
Über die Nullstellen der Zetafunktion\n",
            ),
            output: "Not reviewed".to_string(),
        },
    ]
}
