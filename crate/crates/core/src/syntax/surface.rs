//! Surface syntax: a small Scheme subset read from s-expressions.

use std::collections::BTreeSet;

use super::sexpr::{read_all, Datum, DatumKind, ReadError};
use super::Pos;

pub type Ident = String;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub kind: TermKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermKind {
    Var(Ident),
    Int(i64),
    Bool(bool),
    Lambda(Vec<Ident>, Box<Term>),
    Let(Vec<(Ident, Term)>, Box<Term>),
    Letrec(Vec<(Ident, Term)>, Box<Term>),
    If(Box<Term>, Box<Term>, Box<Term>),
    /// Clauses and an optional `else` branch.
    Cond(Vec<(Term, Term)>, Option<Box<Term>>),
    And(Vec<Term>),
    Or(Vec<Term>),
    Begin(Vec<Term>),
    App(Box<Term>, Vec<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("{pos}: {msg}")]
    Syntax { msg: String, pos: Pos },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Read(e) => e.pos(),
            ParseError::Syntax { pos, .. } => *pos,
        }
    }
}

fn err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Syntax {
        msg: msg.into(),
        pos,
    })
}

impl Term {
    pub fn new(kind: TermKind, pos: Pos) -> Term {
        Term { kind, pos }
    }

    fn boxed(self) -> Box<Term> {
        Box::new(self)
    }

    /// Variables occurring free in the term. Primitive names count as free.
    pub fn free_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        free(self, &mut Vec::new(), &mut out);
        out
    }

    /// Every identifier mentioned anywhere in the term, bound or free.
    pub fn identifiers(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        idents(self, &mut out);
        out
    }
}

fn free(t: &Term, bound: &mut Vec<Ident>, out: &mut BTreeSet<Ident>) {
    match &t.kind {
        TermKind::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        TermKind::Int(_) | TermKind::Bool(_) => {}
        TermKind::Lambda(formals, body) => {
            let depth = bound.len();
            bound.extend(formals.iter().cloned());
            free(body, bound, out);
            bound.truncate(depth);
        }
        TermKind::Let(binds, body) => {
            for (_, rhs) in binds {
                free(rhs, bound, out);
            }
            let depth = bound.len();
            bound.extend(binds.iter().map(|(x, _)| x.clone()));
            free(body, bound, out);
            bound.truncate(depth);
        }
        TermKind::Letrec(binds, body) => {
            let depth = bound.len();
            bound.extend(binds.iter().map(|(x, _)| x.clone()));
            for (_, rhs) in binds {
                free(rhs, bound, out);
            }
            free(body, bound, out);
            bound.truncate(depth);
        }
        TermKind::If(c, a, b) => {
            free(c, bound, out);
            free(a, bound, out);
            free(b, bound, out);
        }
        TermKind::Cond(clauses, els) => {
            for (test, rhs) in clauses {
                free(test, bound, out);
                free(rhs, bound, out);
            }
            if let Some(e) = els {
                free(e, bound, out);
            }
        }
        TermKind::And(ts) | TermKind::Or(ts) | TermKind::Begin(ts) => {
            for t in ts {
                free(t, bound, out);
            }
        }
        TermKind::App(f, args) => {
            free(f, bound, out);
            for a in args {
                free(a, bound, out);
            }
        }
    }
}

fn idents(t: &Term, out: &mut BTreeSet<Ident>) {
    match &t.kind {
        TermKind::Var(x) => {
            out.insert(x.clone());
        }
        TermKind::Int(_) | TermKind::Bool(_) => {}
        TermKind::Lambda(formals, body) => {
            out.extend(formals.iter().cloned());
            idents(body, out);
        }
        TermKind::Let(binds, body) | TermKind::Letrec(binds, body) => {
            for (x, rhs) in binds {
                out.insert(x.clone());
                idents(rhs, out);
            }
            idents(body, out);
        }
        TermKind::If(c, a, b) => {
            idents(c, out);
            idents(a, out);
            idents(b, out);
        }
        TermKind::Cond(clauses, els) => {
            for (test, rhs) in clauses {
                idents(test, out);
                idents(rhs, out);
            }
            if let Some(e) = els {
                idents(e, out);
            }
        }
        TermKind::And(ts) | TermKind::Or(ts) | TermKind::Begin(ts) => ts.iter().for_each(|t| idents(t, out)),
        TermKind::App(f, args) => {
            idents(f, out);
            args.iter().for_each(|t| idents(t, out));
        }
    }
}

const KEYWORDS: &[&str] = &[
    "lambda", "λ", "let", "let*", "letrec", "if", "cond", "else", "and", "or", "begin", "define",
];

fn symbol(d: &Datum) -> Option<&str> {
    match &d.kind {
        DatumKind::Symbol(s) => Some(s),
        _ => None,
    }
}

fn identifier(d: &Datum) -> Result<Ident, ParseError> {
    match symbol(d) {
        Some(s) if !KEYWORDS.contains(&s) => Ok(s.to_string()),
        Some(s) => err(d.pos, format!("keyword `{s}` used as a variable")),
        None => err(d.pos, "expected an identifier"),
    }
}

fn distinct(names: &[Ident], pos: Pos, what: &str) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return err(pos, format!("duplicate {what} `{n}`"));
        }
    }
    Ok(())
}

fn formals(d: &Datum) -> Result<Vec<Ident>, ParseError> {
    let DatumKind::List(items) = &d.kind else {
        return err(d.pos, "expected a parameter list");
    };
    let names = items.iter().map(identifier).collect::<Result<Vec<_>, _>>()?;
    distinct(&names, d.pos, "parameter")?;
    Ok(names)
}

fn bindings(d: &Datum) -> Result<Vec<(Ident, Term)>, ParseError> {
    let DatumKind::List(items) = &d.kind else {
        return err(d.pos, "expected a binding list");
    };
    items
        .iter()
        .map(|b| match &b.kind {
            DatumKind::List(pair) if pair.len() == 2 => Ok((identifier(&pair[0])?, term(&pair[1])?)),
            _ => err(b.pos, "expected a binding `(name expr)`"),
        })
        .collect()
}

/// A body of one or more forms.
fn body(forms: &[Datum], pos: Pos) -> Result<Term, ParseError> {
    match forms {
        [] => err(pos, "empty body"),
        [one] => term(one),
        _ => Ok(Term::new(
            TermKind::Begin(forms.iter().map(term).collect::<Result<_, _>>()?),
            pos,
        )),
    }
}

fn term(d: &Datum) -> Result<Term, ParseError> {
    let pos = d.pos;
    let items = match &d.kind {
        DatumKind::Int(n) => return Ok(Term::new(TermKind::Int(*n), pos)),
        DatumKind::Bool(b) => return Ok(Term::new(TermKind::Bool(*b), pos)),
        DatumKind::Symbol(_) => return Ok(Term::new(TermKind::Var(identifier(d)?), pos)),
        DatumKind::List(items) => items,
    };
    let Some(head) = items.first() else {
        return err(pos, "empty application");
    };
    let args = &items[1..];
    let kind = match symbol(head) {
        Some("lambda" | "λ") => {
            if args.len() < 2 {
                return err(pos, "`lambda` expects parameters and a body");
            }
            TermKind::Lambda(formals(&args[0])?, body(&args[1..], pos)?.boxed())
        }
        Some("let") => {
            if args.first().and_then(symbol).is_some() {
                return named_let(args, pos);
            }
            if args.len() < 2 {
                return err(pos, "`let` expects bindings and a body");
            }
            let binds = bindings(&args[0])?;
            let names: Vec<Ident> = binds.iter().map(|(x, _)| x.clone()).collect();
            distinct(&names, pos, "binding")?;
            TermKind::Let(binds, body(&args[1..], pos)?.boxed())
        }
        Some("let*") => {
            if args.len() < 2 {
                return err(pos, "`let*` expects bindings and a body");
            }
            let binds = bindings(&args[0])?;
            let inner = body(&args[1..], pos)?;
            if binds.is_empty() {
                return Ok(Term::new(TermKind::Let(vec![], inner.boxed()), pos));
            }
            return Ok(binds
                .into_iter()
                .rev()
                .fold(inner, |acc, b| Term::new(TermKind::Let(vec![b], acc.boxed()), pos)));
        }
        Some("letrec") => {
            if args.len() < 2 {
                return err(pos, "`letrec` expects bindings and a body");
            }
            let binds = bindings(&args[0])?;
            let names: Vec<Ident> = binds.iter().map(|(x, _)| x.clone()).collect();
            distinct(&names, pos, "binding")?;
            TermKind::Letrec(binds, body(&args[1..], pos)?.boxed())
        }
        Some("if") => {
            if args.len() != 3 {
                return err(pos, format!("`if` expects 3 operands, found {}", args.len()));
            }
            TermKind::If(term(&args[0])?.boxed(), term(&args[1])?.boxed(), term(&args[2])?.boxed())
        }
        Some("cond") => cond(args, pos)?,
        Some("and") => TermKind::And(args.iter().map(term).collect::<Result<_, _>>()?),
        Some("or") => TermKind::Or(args.iter().map(term).collect::<Result<_, _>>()?),
        Some("begin") => {
            if args.is_empty() {
                return err(pos, "empty `begin`");
            }
            TermKind::Begin(args.iter().map(term).collect::<Result<_, _>>()?)
        }
        Some("define") => return err(pos, "`define` is only allowed at top level"),
        Some("else") => return err(pos, "`else` outside of `cond`"),
        _ => TermKind::App(term(head)?.boxed(), args.iter().map(term).collect::<Result<_, _>>()?),
    };
    Ok(Term::new(kind, pos))
}

fn named_let(args: &[Datum], pos: Pos) -> Result<Term, ParseError> {
    if args.len() < 3 {
        return err(pos, "named `let` expects a name, bindings and a body");
    }
    let name = identifier(&args[0])?;
    let binds = bindings(&args[1])?;
    let (params, inits): (Vec<Ident>, Vec<Term>) = binds.into_iter().unzip();
    distinct(&params, pos, "binding")?;
    let lam = Term::new(TermKind::Lambda(params, body(&args[2..], pos)?.boxed()), pos);
    let rec = Term::new(
        TermKind::Letrec(vec![(name.clone(), lam)], Term::new(TermKind::Var(name), pos).boxed()),
        pos,
    );
    Ok(Term::new(TermKind::App(rec.boxed(), inits), pos))
}

fn cond(args: &[Datum], pos: Pos) -> Result<TermKind, ParseError> {
    let mut clauses = Vec::new();
    let mut els = None;
    for (i, clause) in args.iter().enumerate() {
        let DatumKind::List(parts) = &clause.kind else {
            return err(clause.pos, "expected a `cond` clause");
        };
        if parts.len() < 2 {
            return err(clause.pos, "`cond` clause needs a test and a body");
        }
        if symbol(&parts[0]) == Some("else") {
            if i + 1 != args.len() {
                return err(clause.pos, "`else` clause must come last");
            }
            els = Some(body(&parts[1..], clause.pos)?.boxed());
        } else {
            clauses.push((term(&parts[0])?, body(&parts[1..], clause.pos)?));
        }
    }
    if clauses.is_empty() && els.is_none() {
        return err(pos, "empty `cond`");
    }
    Ok(TermKind::Cond(clauses, els))
}

enum TopForm {
    DefineFn(Ident, Term),
    DefineVal(Ident, Term),
    Expr(Term),
}

fn top_form(d: &Datum) -> Result<TopForm, ParseError> {
    if let DatumKind::List(items) = &d.kind {
        if items.first().and_then(symbol) == Some("define") {
            let args = &items[1..];
            match args.first().map(|a| &a.kind) {
                Some(DatumKind::List(sig)) if !sig.is_empty() => {
                    let name = identifier(&sig[0])?;
                    let params = sig[1..].iter().map(identifier).collect::<Result<Vec<_>, _>>()?;
                    distinct(&params, d.pos, "parameter")?;
                    let lam = Term::new(TermKind::Lambda(params, body(&args[1..], d.pos)?.boxed()), d.pos);
                    return Ok(TopForm::DefineFn(name, lam));
                }
                Some(DatumKind::Symbol(_)) if args.len() == 2 => {
                    let name = identifier(&args[0])?;
                    let rhs = term(&args[1])?;
                    return Ok(match rhs.kind {
                        TermKind::Lambda(..) => TopForm::DefineFn(name, rhs),
                        _ => TopForm::DefineVal(name, rhs),
                    });
                }
                _ => return err(d.pos, "malformed `define`"),
            }
        }
    }
    Ok(TopForm::Expr(term(d)?))
}

fn assemble(mut forms: Vec<TopForm>, pos: Pos) -> Result<Term, ParseError> {
    if forms.is_empty() {
        return err(pos, "program has no expression after its definitions");
    }
    let first = forms.remove(0);
    let rest_pos = pos;
    Ok(match first {
        TopForm::DefineFn(name, lam) => {
            let lam_pos = lam.pos;
            let mut group = vec![(name, lam)];
            while let Some(TopForm::DefineFn(..)) = forms.first() {
                let TopForm::DefineFn(n, l) = forms.remove(0) else { unreachable!() };
                group.push((n, l));
            }
            let names: Vec<Ident> = group.iter().map(|(x, _)| x.clone()).collect();
            distinct(&names, lam_pos, "definition")?;
            Term::new(TermKind::Letrec(group, assemble(forms, rest_pos)?.boxed()), lam_pos)
        }
        TopForm::DefineVal(name, rhs) => {
            let p = rhs.pos;
            Term::new(TermKind::Let(vec![(name, rhs)], assemble(forms, rest_pos)?.boxed()), p)
        }
        TopForm::Expr(e) if forms.is_empty() => e,
        TopForm::Expr(e) => {
            let p = e.pos;
            let rest = assemble(forms, rest_pos)?;
            let mut seq = vec![e];
            match rest.kind {
                TermKind::Begin(more) => seq.extend(more),
                _ => seq.push(rest),
            }
            Term::new(TermKind::Begin(seq), p)
        }
    })
}

/// Parse a program: a sequence of top-level definitions and expressions.
pub fn parse(text: &str) -> Result<Term, ParseError> {
    let data = read_all(text)?;
    let end = Pos { line: 1, col: 1 };
    let forms = data.iter().map(top_form).collect::<Result<Vec<_>, _>>()?;
    let pos = data.first().map_or(end, |d| d.pos);
    assemble(forms, pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(t: &Term) -> &str {
        match &t.kind {
            TermKind::Var(x) => x,
            other => panic!("expected var, got {other:?}"),
        }
    }

    #[test]
    fn identity_lambda() {
        let t = parse("(lambda (x) x)").unwrap();
        let TermKind::Lambda(formals, body) = &t.kind else { panic!() };
        assert_eq!(formals, &["x"]);
        assert_eq!(var(body), "x");
    }

    #[test]
    fn application_of_two_lambdas() {
        let t = parse("((lambda (x) x) (lambda (y) y))").unwrap();
        let TermKind::App(f, args) = &t.kind else { panic!() };
        assert!(matches!(f.kind, TermKind::Lambda(..)));
        assert_eq!(args.len(), 1);
        assert!(matches!(args[0].kind, TermKind::Lambda(..)));
    }

    #[test]
    fn unbalanced_is_an_error() {
        let e = parse("(let ((z (f a)))").unwrap_err();
        assert!(matches!(e, ParseError::Read(ReadError::Unclosed { .. })));
        assert_eq!(e.pos(), Pos { line: 1, col: 1 });
    }

    #[test]
    fn let_star_nests() {
        let t = parse("(let* ((a 1) (b a)) b)").unwrap();
        let TermKind::Let(outer, inner) = &t.kind else { panic!() };
        assert_eq!(outer[0].0, "a");
        let TermKind::Let(b, _) = &inner.kind else { panic!() };
        assert_eq!(b[0].0, "b");
    }

    #[test]
    fn defines_group_into_letrec() {
        let t = parse("(define (f x) (g x)) (define (g y) y) (define z 3) (f z)").unwrap();
        let TermKind::Letrec(group, rest) = &t.kind else { panic!("{t:?}") };
        assert_eq!(group.len(), 2);
        let TermKind::Let(binds, body) = &rest.kind else { panic!() };
        assert_eq!(binds[0].0, "z");
        assert!(matches!(body.kind, TermKind::App(..)));
    }

    #[test]
    fn cond_with_else() {
        let t = parse("(cond [(<= n 1) 1] [else 2])").unwrap();
        let TermKind::Cond(clauses, Some(els)) = &t.kind else { panic!() };
        assert_eq!(clauses.len(), 1);
        assert_eq!(els.kind, TermKind::Int(2));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse("\n  (if a b)").unwrap_err();
        assert_eq!(e.pos(), Pos { line: 2, col: 3 });
        assert!(parse("(lambda (x x) x)").is_err());
        assert!(parse("(define (f) 1)").is_err());
        assert!(parse("(let ((lambda 1)) 2)").is_err());
    }

    #[test]
    fn free_vars_respect_binding() {
        let t = parse("(let ((v (f v))) v)").unwrap();
        assert_eq!(t.free_vars(), ["f", "v"].iter().map(|s| s.to_string()).collect());
        let t = parse("(letrec ((h (lambda (n) (h n)))) (h k))").unwrap();
        assert_eq!(t.free_vars(), ["k".to_string()].into_iter().collect());
    }
}
