//! Bracketed linearization of dependency trees.
//!
//! Each word becomes `(label`, its left dependents, the word, its right
//! dependents, `)`; the sentence is the linearization of the root's
//! children. A word that starts with `(` or `\`, or is exactly `)`, is
//! written with a leading `\`.

use crate::depparse::DependencyTree;
use crate::error::{invalid_arg, Result};

pub const CLOSE: &str = ")";

fn escape(word: &str) -> String {
    if word.starts_with('(') || word.starts_with('\\') || word == CLOSE {
        format!("\\{word}")
    } else {
        word.to_string()
    }
}

/// Symbol sequence for `tokens` under `tree`, at most `3 n` symbols.
pub fn linearize<S: AsRef<str>>(tokens: &[S], tree: &DependencyTree) -> Result<Vec<String>> {
    if tokens.len() != tree.len() {
        return Err(invalid_arg!("{} tokens for a tree over {}", tokens.len(), tree.len()));
    }
    if tree.roots().len() != 1 {
        return Err(invalid_arg!("linearization needs a single-rooted tree"));
    }
    if !tree.is_projective() {
        return Err(invalid_arg!("only projective trees keep surface order when linearized"));
    }
    if let Some(l) = tree.labels().iter().find(|l| l.is_empty() || l.contains(char::is_whitespace)) {
        return Err(invalid_arg!("label {l:?} cannot be linearized"));
    }
    let n = tokens.len();
    let mut children = vec![Vec::new(); n + 1];
    for d in 1..=n {
        children[tree.head(d)].push(d);
    }
    let mut out = Vec::with_capacity(3 * n);
    // explicit stack keeps deep chains off the call stack
    enum Step {
        Open(usize),
        Word(usize),
        Close,
    }
    let mut stack: Vec<Step> = children[0].iter().rev().map(|&r| Step::Open(r)).collect();
    while let Some(step) = stack.pop() {
        match step {
            Step::Open(d) => {
                out.push(format!("({}", tree.label(d)));
                stack.push(Step::Close);
                for &c in children[d].iter().rev().filter(|&&c| c > d) {
                    stack.push(Step::Open(c));
                }
                stack.push(Step::Word(d));
                for &c in children[d].iter().rev().filter(|&&c| c < d) {
                    stack.push(Step::Open(c));
                }
            }
            Step::Word(d) => out.push(escape(tokens[d - 1].as_ref())),
            Step::Close => out.push(CLOSE.to_string()),
        }
    }
    Ok(out)
}

/// Inverse of [`linearize`].
pub fn delinearize<S: AsRef<str>>(symbols: &[S]) -> Result<(Vec<String>, DependencyTree)> {
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut labels = Vec::new();
    // open brackets: (label, token index once its word is seen, pending children)
    let mut open: Vec<(String, Option<usize>, Vec<usize>)> = Vec::new();
    let mut roots = 0;
    for (i, s) in symbols.iter().enumerate() {
        let s = s.as_ref();
        if s == CLOSE {
            let (label, word, kids) = open.pop().ok_or_else(|| invalid_arg!("unbalanced `)` at symbol {i}"))?;
            let d = word.ok_or_else(|| invalid_arg!("bracket closed at symbol {i} without a word"))?;
            labels[d - 1] = label;
            for k in kids {
                heads[k - 1] = d;
            }
            match open.last_mut() {
                Some(parent) => parent.2.push(d),
                None => {
                    heads[d - 1] = 0;
                    roots += 1;
                }
            }
        } else if let Some(label) = s.strip_prefix('(') {
            if label.is_empty() {
                return Err(invalid_arg!("empty label at symbol {i}"));
            }
            open.push((label.to_string(), None, Vec::new()));
        } else {
            let word = s.strip_prefix('\\').unwrap_or(s);
            let top = open.last_mut().ok_or_else(|| invalid_arg!("word outside brackets at symbol {i}"))?;
            if top.1.is_some() {
                return Err(invalid_arg!("second word in one bracket at symbol {i}"));
            }
            tokens.push(word.to_string());
            heads.push(usize::MAX);
            labels.push(String::new());
            top.1 = Some(tokens.len());
        }
    }
    if !open.is_empty() {
        return Err(invalid_arg!("{} unclosed brackets", open.len()));
    }
    if roots != 1 {
        return Err(invalid_arg!("expected one top-level bracket, found {roots}"));
    }
    let tree = DependencyTree::new(heads, labels)?;
    Ok((tokens, tree))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(heads: &[usize], labels: &[&str]) -> DependencyTree {
        DependencyTree::new(heads.to_vec(), labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn single_token() {
        let t = tree(&[0], &["root"]);
        assert_eq!(linearize(&["w"], &t).unwrap().join(" "), "(root w )");
    }

    #[test]
    fn three_token_chain() {
        let t = tree(&[2, 0, 2], &["dep_a", "root", "dep_c"]);
        let s = linearize(&["a", "b", "c"], &t).unwrap();
        assert_eq!(s.join(" "), "(root (dep_a a ) b (dep_c c ) )");
        let (toks, back) = delinearize(&s).unwrap();
        assert_eq!(toks, vec!["a", "b", "c"]);
        assert_eq!(back, t);
    }

    #[test]
    fn escaping() {
        let t = tree(&[0, 1, 1], &["root", "x", "y"]);
        let words = [")", "(x", "\\y"];
        let s = linearize(&words, &t).unwrap();
        assert_eq!(s.join(" "), "(root \\) (x \\(x ) (y \\\\y ) )");
        assert_eq!(delinearize(&s).unwrap().0, words);
    }

    #[test]
    fn malformed_input() {
        for bad in ["(root a", "a", "(root a ) )", "(root a b )", "(root ) ", "(root a ) (root b )"] {
            let syms: Vec<&str> = bad.split_whitespace().collect();
            assert!(delinearize(&syms).is_err(), "{bad}");
        }
        let t = tree(&[0, 0], &["r", "r"]);
        assert!(linearize(&["a", "b"], &t).is_err());
        let crossing = tree(&[0, 4, 1, 1], &["r", "a", "b", "c"]);
        assert!(linearize(&["a", "b", "c", "d"], &crossing).is_err());
    }
}
