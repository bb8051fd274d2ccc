use crate::cfg::{build_cfg, Cfg};
use crate::syntax::{parse, tokenize, Ast, SyntaxDiagnostic, Token};

/// A parsed MiniLang program: source, tokens, AST and normalized CFG.
#[derive(Debug, Clone)]
pub struct Program {
    source: String,
    tokens: Vec<Token>,
    ast: Ast,
    cfg: Cfg,
}

impl Program {
    pub fn parse(source: &str) -> Result<Program, SyntaxDiagnostic> {
        let tokens = tokenize(source)?;
        let ast = parse(&tokens)?;
        let cfg = build_cfg(&ast);
        Ok(Program { source: source.to_string(), tokens, ast, cfg })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Number of lexical tokens.
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn cfg(&self) -> &Cfg {
        &self.cfg
    }

    pub fn name(&self) -> &str {
        self.ast.function_name()
    }
}
