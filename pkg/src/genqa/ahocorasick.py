"""Aho-Corasick multi-pattern string matching over characters.

The automaton is a goto trie augmented with failure links (longest proper
suffix of the current path that is itself a path from the root) and output
links (patterns ending at a node, plus those inherited through the failure
chain). A single left-to-right scan then reports every occurrence of every
pattern, including overlapping and nested ones, in time linear in the text
length plus the number of matches.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Iterator


class AhoCorasick:
    """Matcher for a fixed set of patterns; build once, scan many texts."""

    def __init__(self, patterns: Iterable[str]):
        self._patterns: list[str] = []
        seen: set[str] = set()
        for p in patterns:
            if not p:
                raise ValueError("empty pattern")
            if p not in seen:
                seen.add(p)
                self._patterns.append(p)
        # Node storage as parallel structures: children dicts, failure link
        # ids, and the pattern indices that end at each node.
        self._children: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._ends: list[list[int]] = [[]]
        for idx, pat in enumerate(self._patterns):
            node = 0
            for ch in pat:
                nxt = self._children[node].get(ch)
                if nxt is None:
                    nxt = len(self._children)
                    self._children[node][ch] = nxt
                    self._children.append({})
                    self._fail.append(0)
                    self._ends.append([])
                node = nxt
            self._ends[node].append(idx)
        self._build_failure_links()

    @property
    def patterns(self) -> list[str]:
        return list(self._patterns)

    def _build_failure_links(self) -> None:
        # BFS from the root: a node's failure target is found by walking its
        # parent's failure chain until some state has a child on the same
        # character. Output lists are merged down the failure chain so every
        # node knows all patterns ending at any suffix of its path.
        queue: deque[int] = deque()
        for child in self._children[0].values():
            self._fail[child] = 0
            queue.append(child)
        while queue:
            node = queue.popleft()
            for ch, child in self._children[node].items():
                f = self._fail[node]
                while f and ch not in self._children[f]:
                    f = self._fail[f]
                self._fail[child] = self._children[f].get(ch, 0)
                if self._fail[child] == child:
                    self._fail[child] = 0
                self._ends[child] = self._ends[child] + self._ends[self._fail[child]]
                queue.append(child)

    def finditer(self, text: str) -> Iterator[tuple[str, int, int]]:
        """Yield (pattern, start, end) for every occurrence in scan order.

        Matches ending at the same position are reported longest first.
        """
        node = 0
        for pos, ch in enumerate(text):
            while node and ch not in self._children[node]:
                node = self._fail[node]
            node = self._children[node].get(ch, 0)
            for pat_idx in self._ends[node]:
                pat = self._patterns[pat_idx]
                yield pat, pos + 1 - len(pat), pos + 1

    def findall(self, text: str) -> list[tuple[str, int, int]]:
        return list(self.finditer(text))


def naive_findall(patterns: Iterable[str], text: str) -> list[tuple[str, int, int]]:
    """Quadratic all-substrings scan; the independent reference for tests."""
    out = []
    for pos in range(len(text)):
        for pat in dict.fromkeys(patterns):
            if text.startswith(pat, pos):
                out.append((pat, pos, pos + len(pat)))
    return out
