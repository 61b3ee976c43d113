"""Navigation stack for a low-speed campus shuttle.

Submodules:

- ``roadmap``: lane graph, stations, routing and task state
- ``world``: agents, detection noise, localization health, prediction
- ``frenet``: curvilinear frames along a route and clearance profiles
- ``behavior``: lateral offset selection, governor and intersection gating
- ``motion``: path smoothing, s-t speed search, QP refinement, planning loop
- ``control``: kinematic bicycle model and LTV-MPC tracking
- ``prediction_gate``: corridor conflict checks against predicted agents
- ``sim``: closed-loop scenarios, logs, metrics and announcements
- ``cli``: ``campusnav`` command-line entry point
"""

__version__ = "0.1.0"
