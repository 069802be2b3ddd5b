#include "blendgate/history.hpp"

#include <string>

#include "blendgate/errors.hpp"

namespace blendgate {

std::string_view to_string(Role role) {
    return role == Role::user ? "user" : "bot";
}

ChatHistory::ChatHistory(std::vector<Turn> turns) : turns_(std::move(turns)) {
    validate(turns_);
}

void ChatHistory::validate(const std::vector<Turn>& turns) {
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const Turn& turn = turns[i];
        const Role expected = (i % 2 == 0) ? Role::user : Role::bot;
        if (turn.role != expected) {
            throw ValidationError("history turn " + std::to_string(i) + " should have role " +
                                  std::string(to_string(expected)));
        }
        if (turn.turn_index != static_cast<int>(i / 2)) {
            throw ValidationError("history turn " + std::to_string(i) + " has turn_index " +
                                  std::to_string(turn.turn_index) + ", expected " +
                                  std::to_string(i / 2));
        }
        if (turn.model_id.has_value() != (turn.role == Role::bot)) {
            throw ValidationError("history turn " + std::to_string(i) +
                                  ": model_id must be present exactly on bot turns");
        }
    }
}

void ChatHistory::add_user(std::string text) {
    if (!turns_.empty() && turns_.back().role == Role::user) {
        throw ValidationError("two consecutive user turns");
    }
    turns_.push_back(Turn{Role::user, std::move(text), std::nullopt, next_turn_index()});
}

void ChatHistory::add_bot(std::string text, std::string model_id) {
    if (turns_.empty() || turns_.back().role != Role::user) {
        throw ValidationError("bot turn must follow a user turn");
    }
    const int index = turns_.back().turn_index;
    turns_.push_back(Turn{Role::bot, std::move(text), std::move(model_id), index});
}

void ChatHistory::replace_last_bot(std::string text, std::string model_id) {
    if (turns_.empty() || turns_.back().role != Role::bot) {
        throw ValidationError("no trailing bot turn to replace");
    }
    turns_.back().text = std::move(text);
    turns_.back().model_id = std::move(model_id);
}

void ChatHistory::pop_back() {
    if (!turns_.empty()) turns_.pop_back();
}

std::string_view ChatHistory::last_bot_text() const noexcept {
    for (auto it = turns_.rbegin(); it != turns_.rend(); ++it) {
        if (it->role == Role::bot) return it->text;
    }
    return {};
}

ChatHistory ChatHistory::without_trailing_bot() const {
    ChatHistory copy = *this;
    if (!copy.turns_.empty() && copy.turns_.back().role == Role::bot) copy.turns_.pop_back();
    return copy;
}

}  // namespace blendgate
