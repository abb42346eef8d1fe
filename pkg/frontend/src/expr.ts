/**
 * Evaluator for manifest objective expressions (+ - * / ** and parens),
 * used to shade the contour background behind trajectory plots. The
 * hidden lab function itself never reaches the browser; only this
 * instructor-declared expression does.
 */

type Token =
  | { kind: "num"; value: number }
  | { kind: "name"; value: string }
  | { kind: "op"; value: string };

const TOKEN_RE = /\s*(?:(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(\*\*|[-+*/()]))/y;

function tokenize(text: string): Token[] {
  const tokens: Token[] = [];
  let pos = 0;
  while (pos < text.length) {
    TOKEN_RE.lastIndex = pos;
    const m = TOKEN_RE.exec(text);
    if (!m) {
      if (text.slice(pos).trim() === "") break;
      throw new Error(`unexpected character in expression at ${pos}`);
    }
    pos = TOKEN_RE.lastIndex;
    if (m[1] !== undefined) tokens.push({ kind: "num", value: parseFloat(m[1]) });
    else if (m[2] !== undefined) tokens.push({ kind: "name", value: m[2] });
    else tokens.push({ kind: "op", value: m[3] });
  }
  return tokens;
}

type Node =
  | { kind: "num"; value: number }
  | { kind: "var"; name: string }
  | { kind: "neg"; operand: Node }
  | { kind: "binary"; op: string; left: Node; right: Node };

export class Expression {
  private ast: Node;
  readonly variables: Set<string>;

  constructor(readonly text: string) {
    const tokens = tokenize(text);
    if (tokens.length === 0) throw new Error("empty expression");
    let pos = 0;

    const peek = () => tokens[pos];
    const takeOp = (...ops: string[]) => {
      const t = tokens[pos];
      if (t && t.kind === "op" && ops.includes(t.value)) {
        pos += 1;
        return t.value;
      }
      return null;
    };

    const parseSum = (): Node => {
      let node = parseTerm();
      for (;;) {
        const op = takeOp("+", "-");
        if (!op) return node;
        node = { kind: "binary", op, left: node, right: parseTerm() };
      }
    };
    const parseTerm = (): Node => {
      let node = parseUnary();
      for (;;) {
        const op = takeOp("*", "/");
        if (!op) return node;
        node = { kind: "binary", op, left: node, right: parseUnary() };
      }
    };
    const parseUnary = (): Node => {
      if (takeOp("-")) return { kind: "neg", operand: parseUnary() };
      if (takeOp("+")) return parseUnary();
      return parsePower();
    };
    const parsePower = (): Node => {
      const base = parseAtom();
      if (takeOp("**")) {
        return { kind: "binary", op: "**", left: base, right: parseUnary() };
      }
      return base;
    };
    const parseAtom = (): Node => {
      const t = peek();
      if (!t) throw new Error("unexpected end of expression");
      pos += 1;
      if (t.kind === "num") return { kind: "num", value: t.value };
      if (t.kind === "name") return { kind: "var", name: t.value };
      if (t.value === "(") {
        const inner = parseSum();
        if (!takeOp(")")) throw new Error("unbalanced parenthesis");
        return inner;
      }
      throw new Error(`unexpected token ${t.value}`);
    };

    this.ast = parseSum();
    if (pos !== tokens.length) throw new Error("trailing tokens in expression");
    this.variables = new Set();
    const walk = (n: Node): void => {
      if (n.kind === "var") this.variables.add(n.name);
      else if (n.kind === "neg") walk(n.operand);
      else if (n.kind === "binary") {
        walk(n.left);
        walk(n.right);
      }
    };
    walk(this.ast);
  }

  evaluate(env: Record<string, number>): number {
    const value = this.evalNode(this.ast, env);
    if (!Number.isFinite(value)) throw new Error(`non-finite value from ${this.text}`);
    return value;
  }

  private evalNode(node: Node, env: Record<string, number>): number {
    switch (node.kind) {
      case "num":
        return node.value;
      case "var": {
        const v = env[node.name];
        if (typeof v !== "number") throw new Error(`unknown variable ${node.name}`);
        return v;
      }
      case "neg":
        return -this.evalNode(node.operand, env);
      case "binary": {
        const a = this.evalNode(node.left, env);
        const b = this.evalNode(node.right, env);
        switch (node.op) {
          case "+":
            return a + b;
          case "-":
            return a - b;
          case "*":
            return a * b;
          case "/":
            return a / b;
          default:
            return a ** b;
        }
      }
    }
  }
}

export function compileExpression(text: string): Expression {
  return new Expression(text);
}
