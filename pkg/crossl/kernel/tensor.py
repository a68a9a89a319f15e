"""Tensor graph nodes and reverse-mode gradient propagation."""

from typing import Callable, Optional, Sequence

import numpy as np

from crossl.core.errors import EmptyTapeError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Dense float64 array that remembers the operation that produced it.

    Leaf tensors (inputs, constants) have no parents. Tensors returned by
    kernel operations keep references to their parents and a closure mapping
    the output gradient to one gradient per parent.
    """

    __slots__ = ("value", "_parents", "_backward")

    def __init__(self, value: np.ndarray | float | Sequence):
        """
        Initialize a leaf tensor.

        Args:
            value: Array-like data, copied and stored as float64
        """
        self.value = np.array(value, dtype=np.float64)
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def record(
        cls,
        value: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: BackwardFn,
    ) -> "Tensor":
        """
        Create the output node of a differentiable operation.

        Args:
            value: Forward result
            parents: Input tensors, in the order backward_fn returns gradients
            backward_fn: Maps d(loss)/d(output) to d(loss)/d(parent) per parent;
                None entries mean "no gradient flows to this parent"

        Returns:
            New tensor attached to the graph
        """
        out = cls.__new__(cls)
        out.value = np.asarray(value, dtype=np.float64)
        out._parents = tuple(parents)
        out._backward = backward_fn
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.value.copy()

    def item(self) -> float:
        """Return the value of a single-element tensor."""
        if self.value.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """Trainable leaf tensor with an accumulated gradient."""

    __slots__ = ("grad", "trainable", "name")

    def __init__(self, value: np.ndarray | float | Sequence, name: str, trainable: bool = True):
        """
        Initialize a parameter.

        Args:
            value: Initial value
            name: Name unique within its model
            trainable: Whether optimizer steps may change the value
        """
        super().__init__(value)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable
        self.name = name

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, trainable={self.trainable})"


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Propagate d(loss)/d(node) through the recorded graph.

    Gradients are added to ``Parameter.grad``; parameters that do not
    contribute to the loss keep whatever they held (zero after an optimizer
    step or at construction).

    Args:
        loss: Single-element tensor produced by a kernel operation

    Raises:
        EmptyTapeError: If no operation was recorded for ``loss``
        ShapeError: If ``loss`` is not a single element
    """
    if not loss._parents:
        raise EmptyTapeError("backward() needs a loss produced by a recorded operation")
    if loss.value.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if isinstance(node, Parameter):
            node.grad = node.grad + grad
        if node._backward is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None:
                continue
            if parent_grad.shape != parent.shape:
                raise ShapeError(
                    f"gradient shape {parent_grad.shape} does not match input shape {parent.shape}"
                )
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad
