// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Measurement script language: parser, pretty-printer and a resumable
// interpreter. The language is line oriented:
//
//   ;text                 comment
//   ;+++++                checkpoint (resume anchor)
//   #set @name token      bind a script variable
//   #ask @name default "prompt"
//                         ask the operator, default shown
//   Device: cmd args...   device command
//   macro(a, b, ...)      macro call; a bare `macro` takes no arguments
//
// An argument written `@name` is a variable reference.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "beamctl/rtdb.hpp"

namespace beamctl::script {

struct Literal {
    std::string text;
    bool operator==(const Literal&) const = default;
};

struct VarRef {
    std::string name;
    bool operator==(const VarRef&) const = default;
};

using Arg = std::variant<Literal, VarRef>;
using Env = std::map<std::string, std::string>;

bool valid_identifier(std::string_view s) noexcept;

/// Throws Error(UnboundVariable).
std::string substitute(const Arg& arg, const Env& env);

struct Comment {
    std::string text;  // everything after the leading ';'
    bool operator==(const Comment&) const = default;
};

struct Checkpoint {
    std::size_t ordinal = 0;  // 1-based, source order
    bool operator==(const Checkpoint&) const = default;
};

struct SetVar {
    std::string name;
    Arg value;
    bool operator==(const SetVar&) const = default;
};

struct Ask {
    std::string name;
    Arg default_value;
    std::string prompt;
    bool operator==(const Ask&) const = default;
};

struct DeviceCmd {
    std::string device;
    std::string command;
    std::vector<Arg> args;
    bool operator==(const DeviceCmd&) const = default;
};

struct MacroCall {
    std::string name;
    std::vector<Arg> args;
    bool bare = false;  // written without parentheses
    bool operator==(const MacroCall&) const = default;
};

using StatementBody = std::variant<Comment, Checkpoint, SetVar, Ask, DeviceCmd, MacroCall>;

struct Statement {
    StatementBody body;
    std::size_t source_line = 0;

    std::string_view kind() const noexcept;
};

struct Program {
    std::vector<Statement> statements;
    std::vector<std::size_t> checkpoints;  // statement indices of Checkpoint statements
    std::string source_hash;
    std::string source;

    std::size_t size() const noexcept { return statements.size(); }
};

/// Throws ParseError at the first bad line.
Program parse(std::string_view text);

/// Canonical rendering of one statement / a whole program. Re-parsing the
/// rendered program yields structurally the same statements.
std::string render(const Statement& s);
std::string render(const Program& p);

/// True when both programs have the same statement sequence (bodies only;
/// source lines are ignored).
bool structurally_equal(const Program& a, const Program& b);

std::string digest(std::string_view text);

/// Index of the greatest checkpoint at or before `last_completed`, else 0.
std::size_t resume_point(const Program& program, std::optional<std::size_t> last_completed);

// ── execution ───────────────────────────────────────────────────────

enum class RunStatus { Idle, Running, Paused, WaitingAnswer, Finished, Aborted };

std::string_view status_name(RunStatus s) noexcept;
std::optional<RunStatus> parse_status(std::string_view s) noexcept;

struct Question {
    std::string name;
    std::string prompt;
    std::string default_value;
};

struct ExecState {
    std::string source_hash;
    std::optional<std::size_t> last_completed;
    std::size_t cursor = 0;  // next statement to execute
    Env env;
    RunStatus status = RunStatus::Idle;
    std::optional<Question> question;
    std::string abort_reason;
};

/// A device command or macro call with its arguments already substituted.
struct Command {
    enum class Kind { Device, Macro };
    Kind kind = Kind::Device;
    std::string target;   // device or macro name
    std::string command;  // device command; empty for macros
    std::vector<std::string> args;
    std::size_t statement = 0;
    /// True while re-executing statements that had completed before a restart.
    bool replay = false;
};

enum class Progress { Pending, Done, Failed };

class Operation {
public:
    virtual ~Operation() = default;
    virtual Progress poll() = 0;
    virtual std::string detail() const { return {}; }
    virtual void cancel() {}
};

/// What the interpreter dispatches commands to.
class Engine {
public:
    virtual ~Engine() = default;
    /// Throws Error(DispatchError) for an unknown device or macro.
    virtual std::unique_ptr<Operation> dispatch(const Command& cmd) = 0;
    /// Lets the world make progress while a blocking caller waits.
    virtual void idle() = 0;
};

/// Mirrors ExecState under /script/* so that a database snapshot alone is
/// enough to resume.
void mirror_state(rtdb::Database& db, const ExecState& state, std::string_view writer = "script");
ExecState load_state(const rtdb::Database& db);

/// Resumable single-threaded interpreter. `advance()` is non-blocking: it
/// starts or polls at most one statement.
class Interpreter {
public:
    using CompletionHook = std::function<void(const ExecState&)>;

    Interpreter(Program program, rtdb::Database& db, Engine& engine);

    void on_statement_complete(CompletionHook hook) { hook_ = std::move(hook); }

    /// Begin at `from_index` with the given bindings. Statements up to and
    /// including `replay_through` are flagged as replays.
    void start(std::size_t from_index, Env env = {},
               std::optional<std::size_t> replay_through = std::nullopt);

    /// One quantum of work. Returns the index of a statement that completed,
    /// if any.
    std::optional<std::size_t> advance();

    /// Throws Error(NotWaiting).
    void answer(std::string_view value);
    void pause();
    void resume();
    void stop(std::string reason);

    const ExecState& state() const noexcept { return state_; }
    const Program& program() const noexcept { return program_; }
    bool in_flight() const noexcept { return static_cast<bool>(op_); }
    /// Restores status and bindings without running anything.
    void adopt(ExecState state);

private:
    void complete_current();
    void abort(std::string reason);
    void publish();

    Program program_;
    rtdb::Database& db_;
    Engine& engine_;
    ExecState state_;
    std::unique_ptr<Operation> op_;
    std::optional<std::size_t> replay_through_;
    bool pause_requested_ = false;
    CompletionHook hook_;
};

/// Executes exactly one statement, blocking through `engine.idle()`.
/// Precondition: status Running.
ExecState step(ExecState exec, const Program& program, Engine& engine, rtdb::Database& db);

using AnswerProvider = std::function<std::string(const Question&)>;

/// Runs from `from_index` to a terminal status. Questions are answered by
/// `answers`; by default every question takes its default.
ExecState run(const Program& program, Engine& engine, rtdb::Database& db, std::size_t from_index,
              AnswerProvider answers = nullptr);

/// Applies an operator answer to a waiting state. Throws Error(NotWaiting).
ExecState answer(ExecState exec, std::string_view value);

}  // namespace beamctl::script
