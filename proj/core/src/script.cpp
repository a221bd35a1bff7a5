// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/script.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "beamctl/error.hpp"
#include "beamctl/rng.hpp"

namespace beamctl::script {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::size_t scan_identifier(std::string_view s) {
    if (s.empty() || !ident_start(s[0])) return 0;
    std::size_t n = 1;
    while (n < s.size() && ident_char(s[n])) ++n;
    return n;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

Arg make_arg(std::string_view token, std::size_t line) {
    token = trim(token);
    if (token.empty()) throw ParseError(line, "empty argument");
    if (token.front() == '@') {
        auto name = token.substr(1);
        if (!valid_identifier(name)) {
            throw ParseError(line, "bad variable reference '" + std::string(token) + "'");
        }
        return VarRef{std::string(name)};
    }
    return Literal{std::string(token)};
}

std::string render_arg(const Arg& a) {
    if (auto* v = std::get_if<VarRef>(&a)) return "@" + v->name;
    return std::get<Literal>(a).text;
}

StatementBody parse_directive(std::string_view line, std::size_t lineno) {
    auto words_start = line.substr(1);
    auto kw_len = scan_identifier(words_start);
    auto keyword = words_start.substr(0, kw_len);
    auto rest = trim(words_start.substr(kw_len));
    if (keyword != "set" && keyword != "ask") {
        throw ParseError(lineno, "bad # directive '" + std::string(line) + "'");
    }
    if (rest.empty() || rest.front() != '@') {
        throw ParseError(lineno, "#" + std::string(keyword) + " needs an @variable");
    }
    auto name_len = scan_identifier(rest.substr(1));
    auto name = rest.substr(1, name_len);
    auto after = rest.substr(1 + name_len);
    if (name.empty() || (!after.empty() && !is_space(after.front()))) {
        throw ParseError(lineno, "bad variable name in #" + std::string(keyword));
    }
    after = trim(after);
    if (keyword == "set") {
        if (after.empty()) throw ParseError(lineno, "#set needs a value");
        return SetVar{std::string(name), make_arg(after, lineno)};
    }
    // #ask @name default "prompt"
    if (after.empty()) throw ParseError(lineno, "#ask needs a default value");
    std::string_view default_tok;
    std::string prompt;
    if (auto q = after.find('"'); q != std::string_view::npos) {
        default_tok = trim(after.substr(0, q));
        auto close = after.rfind('"');
        if (close == q || trim(after.substr(close + 1)).size() != 0) {
            throw ParseError(lineno, "unterminated prompt in #ask");
        }
        prompt = std::string(after.substr(q + 1, close - q - 1));
    } else {
        default_tok = after;
        prompt = std::string(name);
    }
    if (default_tok.empty() || split_ws(default_tok).size() != 1) {
        throw ParseError(lineno, "#ask needs exactly one default token");
    }
    return Ask{std::string(name), make_arg(default_tok, lineno), std::move(prompt)};
}

StatementBody parse_call_or_command(std::string_view line, std::size_t lineno) {
    auto id_len = scan_identifier(line);
    if (id_len == 0) throw ParseError(lineno, "unrecognized statement");
    auto ident = line.substr(0, id_len);
    auto rest = line.substr(id_len);
    auto rest_trim = trim(rest);

    if (rest_trim.empty()) return MacroCall{std::string(ident), {}, true};

    if (rest_trim.front() == ':') {
        auto words = split_ws(rest_trim.substr(1));
        if (words.empty()) throw ParseError(lineno, "empty device command");
        DeviceCmd cmd{std::string(ident), std::string(words[0]), {}};
        if (!valid_identifier(cmd.command)) {
            throw ParseError(lineno, "bad device command '" + cmd.command + "'");
        }
        for (std::size_t i = 1; i < words.size(); ++i) cmd.args.push_back(make_arg(words[i], lineno));
        return cmd;
    }

    if (rest.front() == '(') {
        if (rest_trim.back() != ')') throw ParseError(lineno, "unterminated call");
        auto inner = rest_trim.substr(1, rest_trim.size() - 2);
        if (inner.find_first_of("()") != std::string_view::npos) {
            throw ParseError(lineno, "nested parentheses in call");
        }
        MacroCall call{std::string(ident), {}, false};
        if (!trim(inner).empty()) {
            std::size_t pos = 0;
            while (true) {
                auto comma = inner.find(',', pos);
                call.args.push_back(make_arg(
                    inner.substr(pos, comma == std::string_view::npos ? comma : comma - pos),
                    lineno));
                if (comma == std::string_view::npos) break;
                pos = comma + 1;
            }
        }
        return call;
    }
    throw ParseError(lineno, "unrecognized statement");
}

}  // namespace

bool valid_identifier(std::string_view s) noexcept {
    return !s.empty() && scan_identifier(s) == s.size();
}

std::string substitute(const Arg& arg, const Env& env) {
    if (auto* lit = std::get_if<Literal>(&arg)) return lit->text;
    const auto& name = std::get<VarRef>(arg).name;
    auto it = env.find(name);
    if (it == env.end()) throw Error(Errc::UnboundVariable, "unbound variable @" + name);
    return it->second;
}

std::string_view Statement::kind() const noexcept {
    static constexpr std::string_view names[] = {"Comment",   "Checkpoint", "SetVar",
                                                 "Ask",       "DeviceCmd",  "MacroCall"};
    return names[body.index()];
}

std::string digest(std::string_view text) { return fmt::format("{:016x}", fnv1a64(text)); }

Program parse(std::string_view text) {
    Program prog;
    prog.source = std::string(text);
    prog.source_hash = digest(text);
    std::size_t lineno = 0;
    std::size_t pos = 0;
    std::size_t ordinal = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++lineno;

        auto line = trim(raw);
        if (line.empty()) continue;

        StatementBody body;
        if (line.front() == ';') {
            if (line == ";+++++") {
                body = Checkpoint{++ordinal};
            } else {
                body = Comment{std::string(line.substr(1))};
            }
        } else if (line.front() == '#') {
            body = parse_directive(line, lineno);
        } else {
            body = parse_call_or_command(line, lineno);
        }
        if (std::holds_alternative<Checkpoint>(body)) prog.checkpoints.push_back(prog.statements.size());
        prog.statements.push_back({std::move(body), lineno});
    }
    return prog;
}

std::string render(const Statement& s) {
    struct Renderer {
        std::string operator()(const Comment& c) const { return ";" + c.text; }
        std::string operator()(const Checkpoint&) const { return ";+++++"; }
        std::string operator()(const SetVar& v) const {
            return "#set @" + v.name + " " + render_arg(v.value);
        }
        std::string operator()(const Ask& a) const {
            return "#ask @" + a.name + " " + render_arg(a.default_value) + " \"" + a.prompt + "\"";
        }
        std::string operator()(const DeviceCmd& d) const {
            std::string out = d.device + ": " + d.command;
            for (const auto& a : d.args) out += " " + render_arg(a);
            return out;
        }
        std::string operator()(const MacroCall& m) const {
            if (m.bare) return m.name;
            std::string out = m.name + "(";
            for (std::size_t i = 0; i < m.args.size(); ++i) {
                if (i) out += ",";
                out += render_arg(m.args[i]);
            }
            return out + ")";
        }
    };
    return std::visit(Renderer{}, s.body);
}

std::string render(const Program& p) {
    std::string out;
    for (const auto& s : p.statements) {
        out += render(s);
        out += '\n';
    }
    return out;
}

bool structurally_equal(const Program& a, const Program& b) {
    return a.checkpoints == b.checkpoints &&
           std::equal(a.statements.begin(), a.statements.end(), b.statements.begin(),
                      b.statements.end(),
                      [](const Statement& x, const Statement& y) { return x.body == y.body; });
}

std::size_t resume_point(const Program& program, std::optional<std::size_t> last_completed) {
    if (!last_completed) return 0;
    std::size_t best = 0;
    for (auto idx : program.checkpoints) {
        if (idx > *last_completed) break;
        best = idx;
    }
    return best;
}

// ── state mirroring ─────────────────────────────────────────────────

std::string_view status_name(RunStatus s) noexcept {
    switch (s) {
    case RunStatus::Idle: return "Idle";
    case RunStatus::Running: return "Running";
    case RunStatus::Paused: return "Paused";
    case RunStatus::WaitingAnswer: return "WaitingAnswer";
    case RunStatus::Finished: return "Finished";
    case RunStatus::Aborted: return "Aborted";
    }
    return "Idle";
}

std::optional<RunStatus> parse_status(std::string_view s) noexcept {
    for (auto st : {RunStatus::Idle, RunStatus::Running, RunStatus::Paused,
                    RunStatus::WaitingAnswer, RunStatus::Finished, RunStatus::Aborted}) {
        if (status_name(st) == s) return st;
    }
    return std::nullopt;
}

void mirror_state(rtdb::Database& db, const ExecState& st, std::string_view writer) {
    db.set("/script/status", std::string(status_name(st.status)), writer);
    db.set("/script/source_hash", st.source_hash, writer);
    db.set("/script/last_completed",
           st.last_completed ? static_cast<std::int64_t>(*st.last_completed) : std::int64_t{-1},
           writer);
    db.set("/script/cursor", static_cast<std::int64_t>(st.cursor), writer);
    db.set("/script/abort_reason", st.abort_reason, writer);
    const Question none{};
    const Question& q = st.question ? *st.question : none;
    db.set("/script/question/name", q.name, writer);
    db.set("/script/question/prompt", q.prompt, writer);
    db.set("/script/question/default", q.default_value, writer);
    for (const auto& [name, value] : st.env) {
        const std::string path = "/script/vars/" + name;
        if (db.get_text(path) != value) db.set(path, value, writer);
    }
}

ExecState load_state(const rtdb::Database& db) {
    ExecState st;
    st.source_hash = db.get_text("/script/source_hash").value_or("");
    if (auto lc = db.get_int("/script/last_completed"); lc && *lc >= 0) {
        st.last_completed = static_cast<std::size_t>(*lc);
    }
    st.cursor = static_cast<std::size_t>(db.get_int("/script/cursor").value_or(0));
    st.status = parse_status(db.get_text("/script/status").value_or("Idle")).value_or(RunStatus::Idle);
    st.abort_reason = db.get_text("/script/abort_reason").value_or("");
    if (st.status == RunStatus::WaitingAnswer) {
        st.question = Question{db.get_text("/script/question/name").value_or(""),
                               db.get_text("/script/question/prompt").value_or(""),
                               db.get_text("/script/question/default").value_or("")};
    }
    for (const auto& path : db.list(rtdb::VarPath::parse("/script/vars"))) {
        if (path.segments().size() != 3) continue;
        if (auto v = db.get_text(path.str())) st.env[path.segments()[2]] = *v;
    }
    return st;
}

// ── Interpreter ─────────────────────────────────────────────────────

Interpreter::Interpreter(Program program, rtdb::Database& db, Engine& engine)
    : program_(std::move(program)), db_(db), engine_(engine) {
    state_.source_hash = program_.source_hash;
}

void Interpreter::start(std::size_t from_index, Env env,
                        std::optional<std::size_t> replay_through) {
    if (from_index > program_.size()) {
        throw Error(Errc::BadRequest, fmt::format("start index {} beyond program of {} statements",
                                                  from_index, program_.size()));
    }
    op_.reset();
    pause_requested_ = false;
    replay_through_ = replay_through;
    state_.cursor = from_index;
    state_.last_completed.reset();
    state_.env = std::move(env);
    state_.question.reset();
    state_.abort_reason.clear();
    state_.status = RunStatus::Running;
    publish();
}

void Interpreter::adopt(ExecState state) {
    op_.reset();
    state_ = std::move(state);
    state_.source_hash = program_.source_hash;
}

void Interpreter::publish() {
    mirror_state(db_, state_);
    // The statement about to run, for display only; load_state ignores it.
    std::string current;
    std::int64_t line = 0;
    if (state_.cursor < program_.statements.size()) {
        current = render(program_.statements[state_.cursor]);
        line = static_cast<std::int64_t>(program_.statements[state_.cursor].source_line);
    }
    if (db_.get_text("/script/current") != current) db_.set("/script/current", current, "script");
    if (db_.get_int("/script/line") != line) db_.set("/script/line", line, "script");
}

void Interpreter::abort(std::string reason) {
    if (op_) {
        op_->cancel();
        op_.reset();
    }
    state_.status = RunStatus::Aborted;
    state_.abort_reason = std::move(reason);
    state_.question.reset();
    publish();
}

void Interpreter::complete_current() {
    op_.reset();
    state_.last_completed = state_.cursor;
    ++state_.cursor;
    if (state_.cursor >= program_.size()) state_.status = RunStatus::Finished;
    publish();
    if (hook_) hook_(state_);
}

std::optional<std::size_t> Interpreter::advance() {
    if (state_.status != RunStatus::Running) return std::nullopt;

    if (op_) {
        switch (op_->poll()) {
        case Progress::Pending: return std::nullopt;
        case Progress::Failed: {
            auto detail = op_->detail();
            abort(detail.empty() ? "command failed" : detail);
            return std::nullopt;
        }
        case Progress::Done: {
            auto idx = state_.cursor;
            complete_current();
            return idx;
        }
        }
    }

    if (pause_requested_) {
        pause_requested_ = false;
        state_.status = RunStatus::Paused;
        publish();
        return std::nullopt;
    }
    if (state_.cursor >= program_.size()) {
        state_.status = RunStatus::Finished;
        publish();
        return std::nullopt;
    }

    const std::size_t idx = state_.cursor;
    const Statement& stmt = program_.statements[idx];
    db_.set("/script/line", static_cast<std::int64_t>(stmt.source_line), "script");
    db_.set("/script/current", render(stmt), "script");

    try {
        if (std::holds_alternative<Comment>(stmt.body) || std::holds_alternative<Checkpoint>(stmt.body)) {
            complete_current();
            return idx;
        }
        if (auto* sv = std::get_if<SetVar>(&stmt.body)) {
            state_.env[sv->name] = substitute(sv->value, state_.env);
            complete_current();
            return idx;
        }
        if (auto* ask = std::get_if<Ask>(&stmt.body)) {
            state_.status = RunStatus::WaitingAnswer;
            state_.question = Question{ask->name, ask->prompt, substitute(ask->default_value, state_.env)};
            publish();
            return std::nullopt;
        }
        Command cmd;
        cmd.statement = idx;
        cmd.replay = replay_through_ && idx <= *replay_through_;
        if (auto* dc = std::get_if<DeviceCmd>(&stmt.body)) {
            cmd.kind = Command::Kind::Device;
            cmd.target = dc->device;
            cmd.command = dc->command;
            for (const auto& a : dc->args) cmd.args.push_back(substitute(a, state_.env));
        } else {
            const auto& mc = std::get<MacroCall>(stmt.body);
            cmd.kind = Command::Kind::Macro;
            cmd.target = mc.name;
            for (const auto& a : mc.args) cmd.args.push_back(substitute(a, state_.env));
        }
        op_ = engine_.dispatch(cmd);
    } catch (const Error& e) {
        abort(std::string(errc_name(e.code())) + ": " + e.what());
    }
    return std::nullopt;
}

void Interpreter::answer(std::string_view value) {
    if (state_.status != RunStatus::WaitingAnswer || !state_.question) {
        throw Error(Errc::NotWaiting, "no question is pending");
    }
    const Question q = *state_.question;
    state_.env[q.name] = value.empty() ? q.default_value : std::string(value);
    state_.question.reset();
    state_.status = RunStatus::Running;
    complete_current();
}

void Interpreter::pause() {
    if (state_.status != RunStatus::Running) throw Error(Errc::NotRunning, "script is not running");
    if (op_) {
        pause_requested_ = true;
        return;
    }
    state_.status = RunStatus::Paused;
    publish();
}

void Interpreter::resume() {
    if (state_.status != RunStatus::Paused) throw Error(Errc::NotRunning, "script is not paused");
    state_.status = RunStatus::Running;
    publish();
}

void Interpreter::stop(std::string reason) {
    if (state_.status == RunStatus::Finished || state_.status == RunStatus::Aborted ||
        state_.status == RunStatus::Idle) {
        throw Error(Errc::NotRunning, "no active run");
    }
    abort(std::move(reason));
}

// ── blocking helpers ────────────────────────────────────────────────

ExecState step(ExecState exec, const Program& program, Engine& engine, rtdb::Database& db) {
    if (exec.status != RunStatus::Running) throw Error(Errc::NotRunning, "step requires Running");
    if (exec.cursor >= program.size()) throw Error(Errc::BadRequest, "no statement left to step");
    Interpreter it(program, db, engine);
    it.adopt(std::move(exec));
    const std::size_t target = it.state().cursor;
    while (true) {
        auto done = it.advance();
        if (done && *done == target) break;
        const auto st = it.state().status;
        if (st == RunStatus::Aborted || st == RunStatus::WaitingAnswer) break;
        engine.idle();
    }
    const auto& st = it.state();
    if (st.status == RunStatus::Aborted && st.abort_reason.rfind("DispatchError: ", 0) == 0) {
        throw Error(Errc::DispatchError, st.abort_reason.substr(15));
    }
    return st;
}

ExecState answer(ExecState exec, std::string_view value) {
    if (exec.status != RunStatus::WaitingAnswer || !exec.question) {
        throw Error(Errc::NotWaiting, "no question is pending");
    }
    exec.env[exec.question->name] =
        value.empty() ? exec.question->default_value : std::string(value);
    exec.question.reset();
    exec.status = RunStatus::Running;
    exec.last_completed = exec.cursor;
    ++exec.cursor;
    return exec;
}

ExecState run(const Program& program, Engine& engine, rtdb::Database& db, std::size_t from_index,
              AnswerProvider answers) {
    Interpreter it(program, db, engine);
    it.start(from_index);
    while (true) {
        auto done = it.advance();
        switch (it.state().status) {
        case RunStatus::Finished:
        case RunStatus::Aborted:
            return it.state();
        case RunStatus::WaitingAnswer:
            it.answer(answers ? answers(*it.state().question) : std::string{});
            continue;
        case RunStatus::Paused:
            it.resume();
            continue;
        default:
            break;
        }
        if (!done) engine.idle();
    }
}

}  // namespace beamctl::script
