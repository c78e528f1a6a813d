use super::ast::{
    Aggregate, AggregateArg, AggregateFn, ColumnRef, Direction, Join, JoinKind, Literal, OrderExpr, OrderItem,
    Predicate, QueryAst, SelectExpr, SelectItem, Span, TableRef,
};
use super::lexer::{tokenize, Keyword, Spanned, Token};
use super::ParseError;
use crate::executor::Decimal2;

/// Parses one SELECT statement of the supported subset.
pub fn parse_sql(text: &str) -> Result<QueryAst, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let ast = parser.query()?;
    parser.eat(&Token::Semicolon);
    parser.expect(&Token::Eof, "end of input")?;
    Ok(ast)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn peek_at(&self, offset: usize) -> &Token {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].token
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Spanned {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        ParseError::new(self.span(), expected, self.peek().to_string())
    }

    fn eat(&mut self, token: &Token) -> bool {
        if self.peek() == token {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        self.eat(&Token::Keyword(kw))
    }

    fn expect(&mut self, token: &Token, expected: &str) -> Result<(), ParseError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn expect_keyword(&mut self, kw: Keyword, expected: &str) -> Result<(), ParseError> {
        self.expect(&Token::Keyword(kw), expected)
    }

    fn ident(&mut self, expected: &str) -> Result<(String, Span), ParseError> {
        match self.peek() {
            Token::Ident(name) => {
                let name = name.clone();
                let span = self.advance().span;
                Ok((name, span))
            }
            _ => Err(self.error(expected)),
        }
    }

    fn query(&mut self) -> Result<QueryAst, ParseError> {
        self.expect_keyword(Keyword::Select, "SELECT")?;
        let mut select_items = vec![self.select_item()?];
        while self.eat(&Token::Comma) {
            select_items.push(self.select_item()?);
        }

        self.expect_keyword(Keyword::From, "',' or FROM")?;
        let (name, span) = self.ident("table name")?;
        let from_table = TableRef { name, span };

        let join = self.join()?;

        let where_clause = if self.eat_keyword(Keyword::Where) {
            Some(self.predicate()?)
        } else {
            None
        };

        let mut group_by = Vec::new();
        if self.eat_keyword(Keyword::Group) {
            self.expect_keyword(Keyword::By, "BY")?;
            group_by.push(self.column_ref()?);
            while self.eat(&Token::Comma) {
                group_by.push(self.column_ref()?);
            }
        }

        let mut order_by = Vec::new();
        if self.eat_keyword(Keyword::Order) {
            self.expect_keyword(Keyword::By, "BY")?;
            order_by.push(self.order_item(&select_items)?);
            while self.eat(&Token::Comma) {
                order_by.push(self.order_item(&select_items)?);
            }
        }

        let limit = if self.eat_keyword(Keyword::Limit) {
            Some(self.limit()?)
        } else {
            None
        };

        Ok(QueryAst {
            select_items,
            from_table,
            join,
            where_clause,
            group_by,
            order_by,
            limit,
        })
    }

    fn join(&mut self) -> Result<Option<Join>, ParseError> {
        let inner = self.eat_keyword(Keyword::Inner);
        if !self.eat_keyword(Keyword::Join) {
            if inner {
                return Err(self.error("JOIN"));
            }
            return Ok(None);
        }
        let (name, span) = self.ident("table name")?;
        self.expect_keyword(Keyword::On, "ON")?;
        let left = self.column_ref()?;
        if !matches!(self.peek(), Token::Op(super::ast::CompareOp::Eq)) {
            return Err(self.error("'=' (only equality joins are supported)"));
        }
        self.advance();
        let right = self.column_ref()?;
        Ok(Some(Join {
            kind: JoinKind::Inner,
            table: TableRef { name, span },
            left,
            right,
        }))
    }

    fn aggregate_fn(&self) -> Option<AggregateFn> {
        match self.peek() {
            Token::Keyword(Keyword::Count) => Some(AggregateFn::Count),
            Token::Keyword(Keyword::Sum) => Some(AggregateFn::Sum),
            Token::Keyword(Keyword::Avg) => Some(AggregateFn::Avg),
            Token::Keyword(Keyword::Min) => Some(AggregateFn::Min),
            Token::Keyword(Keyword::Max) => Some(AggregateFn::Max),
            _ => None,
        }
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        let expr = if let Some(func) = self.aggregate_fn() {
            let span = self.advance().span;
            self.expect(&Token::LParen, "'('")?;
            let arg = if self.peek() == &Token::Star {
                if func != AggregateFn::Count {
                    return Err(self.error("column (only COUNT accepts *)"));
                }
                self.advance();
                AggregateArg::Star
            } else {
                AggregateArg::Column(self.column_ref()?)
            };
            self.expect(&Token::RParen, "')'")?;
            SelectExpr::Aggregate(Aggregate { func, arg, span })
        } else {
            match self.peek() {
                Token::Star => {
                    return Err(self.error("column or aggregate (SELECT * is not supported)"));
                }
                Token::Ident(_) if self.peek_at(1) == &Token::LParen => {
                    self.advance();
                    return Err(self.error("',' or FROM (only COUNT, SUM, AVG, MIN and MAX may be called)"));
                }
                _ => SelectExpr::Column(self.column_ref()?),
            }
        };

        let alias = if self.eat_keyword(Keyword::As) {
            Some(self.ident("alias")?.0)
        } else if let Token::Ident(name) = self.peek() {
            let name = name.clone();
            self.advance();
            Some(name)
        } else {
            None
        };
        Ok(SelectItem { expr, alias })
    }

    fn column_ref(&mut self) -> Result<ColumnRef, ParseError> {
        let (first, span) = self.ident("column name")?;
        if self.eat(&Token::Dot) {
            let (column, _) = self.ident("column name after '.'")?;
            Ok(ColumnRef {
                table: Some(first),
                column,
                span,
            })
        } else {
            Ok(ColumnRef {
                table: None,
                column: first,
                span,
            })
        }
    }

    fn order_item(&mut self, select_items: &[SelectItem]) -> Result<OrderItem, ParseError> {
        let column = self.column_ref()?;
        let is_alias = column.table.is_none()
            && select_items
                .iter()
                .any(|item| item.alias.as_deref() == Some(column.column.as_str()));
        let expr = if is_alias {
            OrderExpr::Alias(column.column)
        } else {
            OrderExpr::Column(column)
        };
        let direction = if self.eat_keyword(Keyword::Desc) {
            Direction::Desc
        } else {
            self.eat_keyword(Keyword::Asc);
            Direction::Asc
        };
        Ok(OrderItem { expr, direction })
    }

    fn limit(&mut self) -> Result<u64, ParseError> {
        match self.peek().clone() {
            Token::Number { int, frac: None } => match int.parse::<u64>() {
                Ok(n) if n > 0 => {
                    self.advance();
                    Ok(n)
                }
                _ => Err(self.error("positive integer")),
            },
            _ => Err(self.error("positive integer")),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let mut left = self.conjunction()?;
        while self.eat_keyword(Keyword::Or) {
            let right = self.conjunction()?;
            left = Predicate::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Predicate, ParseError> {
        let mut left = self.atom()?;
        while self.eat_keyword(Keyword::And) {
            let right = self.atom()?;
            left = Predicate::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn atom(&mut self) -> Result<Predicate, ParseError> {
        if self.eat(&Token::LParen) {
            let inner = self.predicate()?;
            self.expect(&Token::RParen, "')'")?;
            return Ok(inner);
        }
        if self.aggregate_fn().is_some() {
            return Err(self.error("column (aggregates are not allowed in WHERE)"));
        }
        let column = self.column_ref()?;
        let op = match self.peek() {
            Token::Op(op) => *op,
            _ => return Err(self.error("comparison operator")),
        };
        self.advance();
        let value = self.literal()?;
        Ok(Predicate::Compare { column, op, value })
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let span = self.span();
        let negative = self.eat(&Token::Minus);
        match self.peek().clone() {
            Token::Number { int, frac } => {
                let literal = match frac {
                    None => {
                        let text = if negative { format!("-{int}") } else { int };
                        text.parse::<i64>()
                            .map(Literal::Integer)
                            .map_err(|_| ParseError::new(span, "integer within 64-bit range", text))?
                    }
                    Some(frac) => {
                        let text = format!("{}{int}.{frac}", if negative { "-" } else { "" });
                        Decimal2::parse(&text)
                            .map(Literal::Decimal)
                            .ok_or_else(|| ParseError::new(span, "decimal with at most 2 fraction digits", text))?
                    }
                };
                self.advance();
                Ok(literal)
            }
            _ if negative => Err(self.error("number after '-'")),
            Token::Str(s) => {
                self.advance();
                Ok(Literal::String(s))
            }
            Token::Keyword(Keyword::True) => {
                self.advance();
                Ok(Literal::Boolean(true))
            }
            Token::Keyword(Keyword::False) => {
                self.advance();
                Ok(Literal::Boolean(false))
            }
            _ => Err(self.error("literal")),
        }
    }
}
