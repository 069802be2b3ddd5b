#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace blendgate {

enum class Role { user, bot };

std::string_view to_string(Role role);

/// One conversation turn. `turn_index` is the exchange number: the user turn and the
/// bot reply of exchange k both carry k, so a history [u0, r0, u1] has indices 0, 0, 1.
struct Turn {
    Role role = Role::user;
    std::string text;
    std::optional<std::string> model_id;
    int turn_index = 0;

    bool operator==(const Turn&) const = default;
};

/// Alternating user/bot turns, starting with a user turn.
class ChatHistory {
public:
    ChatHistory() = default;

    /// Validates `turns` (see `validate`).
    explicit ChatHistory(std::vector<Turn> turns);

    void add_user(std::string text);
    void add_bot(std::string text, std::string model_id);

    /// Replaces the trailing bot turn in place, keeping its turn_index.
    void replace_last_bot(std::string text, std::string model_id);

    /// Drops the trailing turn (used to undo a user turn whose reply failed).
    void pop_back();

    const std::vector<Turn>& turns() const noexcept { return turns_; }
    bool empty() const noexcept { return turns_.empty(); }
    std::size_t size() const noexcept { return turns_.size(); }
    const Turn& back() const { return turns_.back(); }

    /// Index the next user turn will get.
    int next_turn_index() const noexcept { return static_cast<int>(turns_.size() / 2); }

    /// Text of the most recent bot turn, or "" if there is none.
    std::string_view last_bot_text() const noexcept;

    /// Copy with the bot turn at the end removed (if any).
    ChatHistory without_trailing_bot() const;

    /// Throws ValidationError unless roles alternate starting with user, indices
    /// follow the exchange numbering, and model_id is present iff role is bot.
    static void validate(const std::vector<Turn>& turns);

    bool operator==(const ChatHistory&) const = default;

private:
    std::vector<Turn> turns_;
};

}  // namespace blendgate
